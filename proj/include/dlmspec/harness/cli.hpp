#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dlmspec/harness/config.hpp"
#include "dlmspec/harness/corpus.hpp"
#include "dlmspec/harness/pipeline.hpp"
#include "dlmspec/harness/serialize.hpp"
#include "dlmspec/harness/synthetic.hpp"
#include "dlmspec/harness/trace.hpp"
#include "json.hpp"

namespace dlmspec::harness {

/// The single environment variable read by the tool.
inline constexpr const char* kOutDirEnv = "DLMSPEC_OUT_DIR";

namespace cli_detail {

namespace fs = std::filesystem;

// One value shared by the same flag on every subcommand; only one subcommand parses.
template <class T>
struct Flag {
  T value{};
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app, const std::string& name, const std::string& help) {
    opts.push_back(app->add_option(name, value, help));
  }
  bool set() const {
    return std::any_of(opts.begin(), opts.end(), [](const CLI::Option* o) { return o->count() > 0; });
  }
};

struct Overrides {
  Flag<int> k_min, k_max, fixed_k;
  Flag<double> delta, rho, tau, lambda, w_bi;
  Flag<std::size_t> beam, m_max, max_len;
  Flag<int> steps, top_k;
  Flag<std::string> mode, cps, adl, accept_q;
  Flag<std::uint64_t> seed;

  void add(CLI::App* app) {
    k_min.add(app, "--k-min", "ADL lower clip k_min");
    k_max.add(app, "--k-max", "ADL upper clip k_max");
    delta.add(app, "--delta", "ADL growth step delta");
    rho.add(app, "--rho", "ADL EMA rate rho");
    beam.add(app, "--beam", "CPS beam width B");
    tau.add(app, "--tau", "CPS cumulative-mass threshold tau");
    m_max.add(app, "--m-max", "candidates per lattice column M_max");
    lambda.add(app, "--lambda", "CPS mixing weight lambda");
    steps.add(app, "--steps", "refinement rounds S");
    top_k.add(app, "--top-k-refine", "positions filled per refinement round");
    w_bi.add(app, "--w-bi", "denoiser forward weight w_bi");
    mode.add(app, "--mode", "greedy | stochastic");
    seed.add(app, "--seed", "root seed");
    cps.add(app, "--cps", "on | off");
    adl.add(app, "--adl", "on | off");
    fixed_k.add(app, "--fixed-k", "draft length with ADL off (0 = k_max)");
    max_len.add(app, "--max-len", "generated-token budget per prompt");
    accept_q.add(app, "--accept-q", "proposal | l2r");
  }

  void apply(RunConfig& c) const {
    auto on_off = [](const std::string& s) {
      if (s == "on") return true;
      if (s == "off") return false;
      throw Error("expected on|off, got " + s);
    };
    auto& e = c.engine;
    if (k_min.set()) e.adl.k_min = k_min.value;
    if (k_max.set()) e.adl.k_max = k_max.value;
    if (delta.set()) e.adl.delta = delta.value;
    if (rho.set()) e.adl.rho = rho.value;
    if (beam.set()) e.cps.beam = beam.value;
    if (tau.set()) e.cps.prune.tau = tau.value;
    if (m_max.set()) e.cps.prune.m_max = m_max.value;
    if (lambda.set()) e.cps.lambda = lambda.value;
    if (steps.set()) e.drafter.steps = steps.value;
    if (top_k.set()) e.drafter.top_k = top_k.value;
    if (w_bi.set()) c.models.w_bi = w_bi.value;
    if (mode.set()) e.mode = parse_mode(mode.value);
    if (seed.set()) c.seed = seed.value;
    if (cps.set()) e.use_cps = on_off(cps.value);
    if (adl.set()) e.use_adl = on_off(adl.value);
    if (fixed_k.set()) e.fixed_k = fixed_k.value;
    if (max_len.set()) e.max_output_len = max_len.value;
    if (accept_q.set()) e.accept_q = parse_accept_q(accept_q.value);
  }
};

struct Context {
  std::string config_path;
  std::string out_dir;
  Overrides over;
  RunConfig cfg;
  std::string hash;

  void resolve() {
    cfg = RunConfig{};
    if (!config_path.empty()) apply_json(cfg, read_json(config_path));
    over.apply(cfg);
    validate(cfg);
    cfg.engine.seed = cfg.seed;
    hash = config_hash(cfg);
    if (out_dir.empty()) {
      const char* env = std::getenv(kOutDirEnv);
      out_dir = env && *env ? env : ".";
    }
    fs::create_directories(out_dir);
  }

  std::string out(const std::string& name) const {
    const fs::path p(name);
    return p.is_absolute() ? name : (fs::path(out_dir) / p).string();
  }

  json provenance() const { return json{{"config_hash", hash}, {"config", to_json(cfg)}}; }
};

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw Error("bad value");
    } catch (const std::exception&) {
      throw Error("malformed sweep value: " + item);
    }
  }
  if (out.empty()) throw Error("no sweep values");
  return out;
}

inline std::string tokens_text(const Sequence& ids, const Vocabulary& v) {
  std::string s;
  for (TokenId id : ids) {
    if (!s.empty()) s += ' ';
    s += v.token(id);
  }
  return s;
}

}  // namespace cli_detail

/// Entry point of the command-line tool; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Speculative decoding with a diffusion-style drafter, path search and adaptive draft length"};
  app.require_subcommand(1);

  Context ctx;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", ctx.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out-dir", ctx.out_dir, std::string("directory for outputs (default $") + kOutDirEnv + " or .)");
    ctx.over.add(sub);
  };

  std::string corpus_path, vocab_path, target_path, proxy_path, denoiser_path, prompts_path, output, trace_path,
      baseline, knob, values, prompt_text, name;
  int order = 0, max_distance = 0;
  double k_add = 0.0;
  std::size_t documents = 5000, k = 0;

  std::function<void()> action;

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic Markov corpus (one document per line)");
  common(gen);
  gen->add_option("--documents", documents, "number of documents");
  gen->add_option("-o,--output", output, "corpus file")->required();
  gen->callback([&] {
    action = [&] {
      const auto lines = synthetic_corpus(ctx.cfg.seed, documents);
      std::string text;
      for (const auto& l : lines) text += l + "\n";
      write_text(ctx.out(output), text);
      auto meta = ctx.provenance();
      meta["documents"] = documents;
      write_text(ctx.out(output) + ".meta.json", dump(meta));
    };
  });

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "build a vocabulary from the training split of a corpus");
  common(bv);
  bv->add_option("--corpus", corpus_path, "corpus file")->required()->check(CLI::ExistingFile);
  bv->add_option("-o,--output", output, "vocabulary file")->required();
  bv->callback([&] {
    action = [&] {
      const auto lines = read_lines(corpus_path);
      const auto v = build_vocabulary(train_lines(lines, ctx.cfg.test_fraction), ctx.cfg.tokenization);
      auto j = vocabulary_to_json(v, ctx.cfg.tokenization);
      j["config_hash"] = ctx.hash;
      write_text(ctx.out(output), dump(j));
    };
  });

  // train-ngram
  auto* tn = app.add_subcommand("train-ngram", "fit an add-k n-gram model on the training split");
  common(tn);
  tn->add_option("--corpus", corpus_path, "corpus file")->required()->check(CLI::ExistingFile);
  tn->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
  auto* tn_order = tn->add_option("--order", order, "n-gram order (default: models.target_order)");
  auto* tn_k = tn->add_option("--k-add", k_add, "add-k constant (default: models.k_add)");
  tn->add_option("-o,--output", output, "model file")->required();
  tn->callback([&] {
    action = [&] {
      const auto [v, mode] = vocabulary_from_json(read_json(vocab_path));
      const auto corpus = encode_corpus(read_lines(corpus_path), v, mode);
      const auto split = split_by_index(corpus.documents, ctx.cfg.test_fraction);
      const int n = tn_order->count() ? order : ctx.cfg.models.target_order;
      const double ka = tn_k->count() ? k_add : ctx.cfg.models.k_add;
      auto j = ngram_to_json(NGramModel::train(split.train, n, ka, v.size()));
      j["config_hash"] = ctx.hash;
      write_text(ctx.out(output), j.dump() + "\n");
    };
  });

  // train-denoiser
  auto* td = app.add_subcommand("train-denoiser", "fit the forward and backward denoiser tables on the training split");
  common(td);
  td->add_option("--corpus", corpus_path, "corpus file")->required()->check(CLI::ExistingFile);
  td->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
  auto* td_order = td->add_option("--order", order, "window order (default: models.denoiser_order)");
  auto* td_k = td->add_option("--k-add", k_add, "add-k constant (default: models.k_add)");
  auto* td_d = td->add_option("--max-distance", max_distance, "largest gap table (default: models.denoiser_distance)");
  td->add_option("-o,--output", output, "model file")->required();
  td->callback([&] {
    action = [&] {
      const auto [v, mode] = vocabulary_from_json(read_json(vocab_path));
      const auto corpus = encode_corpus(read_lines(corpus_path), v, mode);
      const auto split = split_by_index(corpus.documents, ctx.cfg.test_fraction);
      ModelSettings m = ctx.cfg.models;
      if (td_order->count()) m.denoiser_order = order;
      if (td_k->count()) m.k_add = k_add;
      if (td_d->count()) m.denoiser_distance = max_distance;
      auto j = denoiser_to_json(train_denoiser(split.train, v.size(), m));
      j["config_hash"] = ctx.hash;
      write_text(ctx.out(output), j.dump() + "\n");
    };
  });

  // decode
  auto* dec = app.add_subcommand("decode", "decode every prompt in a file");
  common(dec);
  dec->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
  dec->add_option("--target", target_path, "target n-gram model")->required()->check(CLI::ExistingFile);
  dec->add_option("--proxy", proxy_path, "causal proxy n-gram model (default: target)")->check(CLI::ExistingFile);
  dec->add_option("--denoiser", denoiser_path, "denoiser model")->check(CLI::ExistingFile);
  dec->add_option("--prompts", prompts_path, "one prompt per line")->required()->check(CLI::ExistingFile);
  dec->add_option("-o,--output", output, "generated text, one line per prompt")->required();
  dec->add_option("--trace", trace_path, "step trace (JSONL)");
  dec->add_option("--baseline", baseline, "ar-greedy: plain target decoding instead of speculation")
      ->check(CLI::IsMember({"ar-greedy"}));
  dec->callback([&] {
    action = [&] {
      const auto [v, mode] = vocabulary_from_json(read_json(vocab_path));
      const auto target = ngram_from_json(read_json(target_path));
      const auto prompts = parse_prompts(read_lines(prompts_path), v, mode);
      std::string text = "# config_hash " + ctx.hash + "\n";
      std::vector<Trace> traces;
      if (baseline == "ar-greedy") {
        for (const auto& p : prompts) {
          const auto o = ar_greedy(target, p.ids, ctx.cfg.engine.max_output_len);
          text += detokenize(Sequence(o.begin() + static_cast<std::ptrdiff_t>(p.ids.size()), o.end()), v, mode) + "\n";
        }
      } else {
        if (denoiser_path.empty()) throw Error("decode needs --denoiser unless --baseline is given");
        const auto proxy = proxy_path.empty() ? target : ngram_from_json(read_json(proxy_path));
        const auto den = denoiser_from_json(read_json(denoiser_path));
        for (const auto& r : run_decodes({&target, &den, &proxy}, prompts, ctx.cfg.engine)) {
          text += detokenize(r.generated(), v, mode) + "\n";
          traces.push_back(r.trace);
        }
      }
      write_text(ctx.out(output), text);
      if (!trace_path.empty()) write_text(ctx.out(trace_path), traces_to_jsonl(traces, ctx.hash));
    };
  });

  // bench / ablate / sweep share corpus-driven setup
  auto corpus_opts = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--corpus", corpus_path, "corpus file (models are fitted on its training split)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--prompts", prompts_path, "prompt file (default: held-out documents)")->check(CLI::ExistingFile);
    sub->add_option("--name", name, "output file stem (default: the subcommand's own)");
  };
  auto stem = [&](const char* fallback) { return name.empty() ? std::string(fallback) : name; };
  auto setup = [&](Workbench& w, std::vector<Prompt>& prompts) {
    w = prepare(read_lines(corpus_path), ctx.cfg);
    prompts = prompts_path.empty() ? heldout_prompts(w.split.test, ctx.cfg.bench)
                                   : parse_prompts(read_lines(prompts_path), w.vocab, w.mode);
    if (prompts.empty()) throw Error("no usable prompts");
  };
  auto informational_clock = [&](std::chrono::steady_clock::time_point t0) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    err << "wall-clock " << fmt(s) << " s (not written to outputs)\n";
  };

  auto* bench = app.add_subcommand("bench", "decode held-out prompts and summarize MAT and speedup");
  corpus_opts(bench);
  bench->callback([&] {
    action = [&] {
      const auto t0 = std::chrono::steady_clock::now();
      Workbench w;
      std::vector<Prompt> prompts;
      setup(w, prompts);
      std::vector<Trace> traces;
      const auto s = run_bench(w.models(), prompts, ctx.cfg.engine, ctx.cfg.cost, &traces);
      auto j = ctx.provenance();
      j["summary"] = summary_to_json(s);
      write_text(ctx.out(stem("bench") + ".json"), dump(j));
      write_text(ctx.out(stem("bench") + ".csv"), std::string(kSummaryCsvHeader) + "\n" + summary_csv_row(ctx.hash, "run", s) + "\n");
      write_text(ctx.out(stem("bench") + ".traces.jsonl"), traces_to_jsonl(traces, ctx.hash));
      out << "mat " << fmt(s.mat) << " speedup " << fmt(s.speedup) << "\n";
      informational_clock(t0);
    };
  });

  auto* abl = app.add_subcommand("ablate", "CPS x ADL on/off grid");
  corpus_opts(abl);
  abl->callback([&] {
    action = [&] {
      const auto t0 = std::chrono::steady_clock::now();
      Workbench w;
      std::vector<Prompt> prompts;
      setup(w, prompts);
      auto j = ctx.provenance();
      std::string csv = std::string(kSummaryCsvHeader) + "\n";
      json rows = json::array();
      for (const auto& r : ablate(w.models(), prompts, ctx.cfg.engine, ctx.cfg.cost)) {
        const std::string label = std::string("cps=") + (r.cps ? "on" : "off") + ";adl=" + (r.adl ? "on" : "off");
        rows.push_back({{"cps", r.cps}, {"adl", r.adl}, {"summary", summary_to_json(r.summary)}});
        csv += summary_csv_row(ctx.hash, label, r.summary) + "\n";
        out << label << " mat " << fmt(r.summary.mat) << " speedup " << fmt(r.summary.speedup) << "\n";
      }
      j["rows"] = rows;
      write_text(ctx.out(stem("ablation") + ".json"), dump(j));
      write_text(ctx.out(stem("ablation") + ".csv"), csv);
      informational_clock(t0);
    };
  });

  auto* sw = app.add_subcommand("sweep", "vary one knob (S, B, M_max, tau, fixed-k)");
  corpus_opts(sw);
  sw->add_option("--knob", knob, "S | B | M_max | tau | fixed-k")->required();
  sw->add_option("--values", values, "comma-separated values")->required();
  sw->callback([&] {
    action = [&] {
      const auto t0 = std::chrono::steady_clock::now();
      const Knob kn = parse_knob(knob);
      const auto vals = parse_values(values);
      Workbench w;
      std::vector<Prompt> prompts;
      setup(w, prompts);
      auto j = ctx.provenance();
      j["knob"] = knob_name(kn);
      std::string csv = std::string(kSummaryCsvHeader) + "\n";
      json rows = json::array();
      for (const auto& r : sweep(w.models(), prompts, ctx.cfg.engine, ctx.cfg.cost, kn, vals)) {
        const std::string label = knob_name(kn) + "=" + r.label;
        rows.push_back({{"label", r.label}, {"value", r.value}, {"summary", summary_to_json(r.summary)}});
        csv += summary_csv_row(ctx.hash, label, r.summary) + "\n";
        out << label << " mat " << fmt(r.summary.mat) << " speedup " << fmt(r.summary.speedup) << "\n";
      }
      j["rows"] = rows;
      write_text(ctx.out(stem("sweep") + ".json"), dump(j));
      write_text(ctx.out(stem("sweep") + ".csv"), csv);
      informational_clock(t0);
    };
  });

  auto* dl = app.add_subcommand("dump-lattice", "draft one block and write its candidate lattice");
  common(dl);
  dl->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
  dl->add_option("--denoiser", denoiser_path, "denoiser model")->required()->check(CLI::ExistingFile);
  dl->add_option("--proxy", proxy_path, "causal proxy n-gram model")->required()->check(CLI::ExistingFile);
  dl->add_option("--prompt", prompt_text, "prefix text")->required();
  dl->add_option("--k", k, "block length (default: k_max)");
  dl->add_option("-o,--output", output, "lattice file (JSON)")->required();
  dl->callback([&] {
    action = [&] {
      const auto [v, mode] = vocabulary_from_json(read_json(vocab_path));
      const auto den = denoiser_from_json(read_json(denoiser_path));
      const auto proxy = ngram_from_json(read_json(proxy_path));
      const auto prefix = encode(prompt_text, v, mode);
      if (prefix.empty()) throw Error("empty prompt");
      const auto& e = ctx.cfg.engine;
      const std::size_t len = k > 0 ? k : static_cast<std::size_t>(e.adl.k_max);
      const auto rr = refine(den, prefix, len, {e.drafter.steps, e.drafter.top_k, e.cps.prune.m_max});
      const auto pruned = prune_lattice(rr.lattice, e.cps.prune);
      SearchStats stats;
      const auto path = beam_search(prefix, pruned, proxy, e.cps, &stats);
      auto column_json = [&](const LatticeColumn& c) {
        json a = json::array();
        for (const auto& en : c) a.push_back({{"token", v.token(en.token)}, {"id", en.token}, {"score", en.score}});
        return a;
      };
      json cols = json::array();
      for (std::size_t i = 0; i < rr.lattice.size(); ++i)
        cols.push_back({{"offset", i + 1}, {"candidates", column_json(rr.lattice.columns[i])},
                        {"pruned", column_json(pruned.columns[i])}});
      auto j = ctx.provenance();
      j["prompt"] = tokens_text(prefix, v);
      j["draft"] = tokens_text(rr.state.draft(), v);
      j["refinement_rounds"] = rr.state.step;
      j["columns"] = cols;
      j["path"] = {{"tokens", tokens_text(path.tokens, v)},
                   {"score", path.score},
                   {"selection", selection_score(path, e.cps.selection)},
                   {"expansions", stats.expansions},
                   {"depth", stats.depth}};
      write_text(ctx.out(output), dump(j));
    };
  });

  auto* sc = app.add_subcommand("show-config", "print the resolved configuration and its hash");
  common(sc);
  sc->callback([&] { action = [&] { out << dump(ctx.provenance()); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    ctx.resolve();
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }
  try {
    action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dlmspec::harness
