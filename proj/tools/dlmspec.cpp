#include "dlmspec/harness/cli.hpp"

int main(int argc, char** argv) { return dlmspec::harness::run_cli(argc, argv); }
