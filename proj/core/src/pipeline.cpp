#include "shopalign/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "shopalign/eval.hpp"
#include "shopalign/io.hpp"
#include "shopalign/probe.hpp"
#include "shopalign/synth.hpp"

namespace shopalign::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

Manifest Manifest::parse_file(const std::string& path) {
  return parse_string(io::read_text_file(path));
}

Manifest Manifest::parse_string(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("manifest line " + std::to_string(lineno) + " is not key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ValidationError("manifest line " + std::to_string(lineno) + ": empty key");
    m.entries_[key] = value;
  }
  return m;
}

std::string Manifest::get(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int Manifest::get_int(const std::string& key, int fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ValidationError("manifest key '" + key + "' is not an integer: " + it->second);
  }
}

double Manifest::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ValidationError("manifest key '" + key + "' is not a number: " + it->second);
  }
}

bool Manifest::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw ValidationError("manifest key '" + key + "' is not a boolean: " + it->second);
}

std::uint64_t Manifest::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ValidationError("manifest key '" + key + "' is not an integer: " + it->second);
  }
}

std::string Manifest::fingerprint() const {
  std::string normalized;
  for (const auto& [k, v] : entries_) {
    normalized += k;
    normalized += '=';
    normalized += v;
    normalized += '\n';
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(normalized);
  return os.str();
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth",  "corpus",   "embed",
                                                 "align",  "eval",     "typeahead"};
  return names;
}

namespace {

struct Paths {
  fs::path root;
  fs::path of(const std::string& rel) const { return root / rel; }
  std::string s(const std::string& rel) const { return (root / rel).string(); }
};

struct Ctx {
  const Manifest& m;
  Paths paths;
  std::uint64_t seed = 42;
  bool deterministic = true;

  std::uint64_t stage_seed(const std::string& tag) const { return derive_seed(seed, tag); }
};

synth::SynthConfig synth_config(const Ctx& ctx) {
  auto cfg = synth::preset(ctx.m.get("preset", "paper-scale-0.01"));
  cfg.products_a = ctx.m.get_int("synth.products_a", cfg.products_a);
  cfg.products_b = ctx.m.get_int("synth.products_b", cfg.products_b);
  cfg.num_activities = ctx.m.get_int("synth.activities", cfg.num_activities);
  cfg.sessions_a = ctx.m.get_int("synth.sessions_a", cfg.sessions_a);
  cfg.sessions_b = ctx.m.get_int("synth.sessions_b", cfg.sessions_b);
  cfg.alpha_a = ctx.m.get_double("synth.alpha_a", cfg.alpha_a);
  cfg.alpha_b = ctx.m.get_double("synth.alpha_b", cfg.alpha_b);
  cfg.cutoff = ctx.m.get_double("synth.cutoff", cfg.cutoff);
  cfg.intra_activity_prob = ctx.m.get_double("synth.intra_activity_prob", cfg.intra_activity_prob);
  cfg.intent_drift_prob = ctx.m.get_double("synth.drift", cfg.intent_drift_prob);
  cfg.correspondence_prob = ctx.m.get_double("synth.correspondence_prob", cfg.correspondence_prob);
  cfg.correspondence_rest_prob =
      ctx.m.get_double("synth.correspondence_rest_prob", cfg.correspondence_rest_prob);
  cfg.landing_prob = ctx.m.get_double("synth.landing_prob", cfg.landing_prob);
  cfg.feature_dim = ctx.m.get_int("synth.feature_dim", cfg.feature_dim);
  cfg.feature_noise = ctx.m.get_double("synth.feature_noise", cfg.feature_noise);
  cfg.rng_seed = ctx.stage_seed("synth");
  return cfg;
}

embed::TrainConfig embed_config(const Ctx& ctx) {
  embed::TrainConfig cfg;
  cfg.dimension = ctx.m.get_int("embed.dim", 48);
  cfg.window = ctx.m.get_int("embed.window", 5);
  cfg.epochs = ctx.m.get_int("embed.epochs", 20);
  cfg.min_count = ctx.m.get_int("embed.min_count", 5);
  cfg.ns_exponent = ctx.m.get_double("embed.ns_exponent", -1.0);
  cfg.negatives_per_positive = ctx.m.get_int("embed.negatives", 5);
  cfg.learning_rate = ctx.m.get_double("embed.learning_rate", 0.025);
  cfg.threads = ctx.deterministic ? 1 : ctx.m.get_int("embed.threads", 1);
  cfg.rng_seed = ctx.stage_seed("embed");
  return cfg;
}

std::vector<std::string> manifest_methods(const Ctx& ctx) {
  std::vector<std::string> methods;
  for (auto& tok : split(ctx.m.get("align.methods", "im,nm,um,am,tm"), ',')) {
    if (!tok.empty()) methods.push_back(tok);
  }
  return methods;
}

// ---------- stage input/output declarations -----------------------------

std::vector<std::string> stage_outputs(const Ctx& ctx, const std::string& stage) {
  if (stage == "synth") {
    return {"synth/events_a.tsv",      "synth/events_b.tsv",    "synth/catalog_a.tsv",
            "synth/catalog_b.tsv",     "synth/ground_truth.tsv", "synth/cross_train.tsv",
            "synth/cross_eval.tsv",    "synth/queries_train.tsv", "synth/query_sessions.tsv",
            "synth/queries_cross.tsv"};
  }
  if (stage == "corpus") {
    return {"corpus/sessions_a.tsv", "corpus/sessions_b.tsv", "corpus/stats.json"};
  }
  if (stage == "embed") {
    std::vector<std::string> out = {"embed/embeddings_a.vec", "embed/embeddings_b.vec"};
    if (ctx.m.get("embed.grid", "none") != "none") {
      out.insert(out.end(), {"embed/grid_a.json", "embed/grid_b.json",
                             "embed/embeddings_a_worst.vec", "embed/embeddings_b_worst.vec"});
    }
    return out;
  }
  if (stage == "align") {
    std::vector<std::string> out;
    for (const auto& m : manifest_methods(ctx)) {
      if (m == "im") {
        out.push_back("align/seed_im.tsv");
        out.push_back("align/map_im.txt");
      } else if (m == "tm") {
        out.push_back("align/tm_model.json");
      } else {
        out.push_back("align/map_" + m + ".txt");
      }
    }
    return out;
  }
  if (stage == "eval") {
    std::vector<std::string> out = {"eval/nep_a.jsonl", "eval/nep_b.jsonl",
                                    "eval/projection_a.tsv", "eval/projection_b.tsv",
                                    "eval/summary_eval.json"};
    out.push_back("eval/cross_pm_fip.jsonl");
    out.push_back("eval/cross_pm_aip.jsonl");
    for (const auto& m : manifest_methods(ctx)) {
      out.push_back("eval/cross_" + m + "_fip.jsonl");
      out.push_back("eval/cross_" + m + "_aip.jsonl");
    }
    for (const auto& m : manifest_methods(ctx)) {
      if (m == "im") out.push_back("eval/errors_im.jsonl");
    }
    return out;
  }
  if (stage == "typeahead") {
    return {"typeahead/lm_b.json", "typeahead/summary_typeahead.json"};
  }
  throw ValidationError("unknown stage: " + stage);
}

std::vector<std::string> stage_inputs(const Ctx& ctx, const std::string& stage) {
  if (stage == "synth") return {};
  if (stage == "corpus") return {"synth/events_a.tsv", "synth/events_b.tsv"};
  if (stage == "embed") return {"corpus/sessions_a.tsv", "corpus/sessions_b.tsv"};
  if (stage == "align") {
    return {"embed/embeddings_a.vec", "embed/embeddings_b.vec", "synth/catalog_a.tsv",
            "synth/catalog_b.tsv", "synth/cross_train.tsv"};
  }
  if (stage == "eval") {
    auto in = stage_outputs(ctx, "align");
    in.insert(in.end(), {"embed/embeddings_a.vec", "embed/embeddings_b.vec",
                         "corpus/sessions_a.tsv", "corpus/sessions_b.tsv",
                         "synth/catalog_a.tsv", "synth/catalog_b.tsv",
                         "synth/cross_eval.tsv"});
    auto grid = stage_outputs(ctx, "embed");
    in.insert(in.end(), grid.begin(), grid.end());
    return in;
  }
  if (stage == "typeahead") {
    std::vector<std::string> in = {"synth/queries_train.tsv", "synth/query_sessions.tsv",
                                   "synth/queries_cross.tsv", "synth/cross_eval.tsv",
                                   "embed/embeddings_a.vec", "embed/embeddings_b.vec"};
    for (const auto& m : manifest_methods(ctx)) {
      if (m == "im" || m == "um") in.push_back("align/map_" + m + ".txt");
      if (m == "tm") in.push_back("align/tm_model.json");
    }
    return in;
  }
  throw ValidationError("unknown stage: " + stage);
}

// ---------- stage bodies --------------------------------------------------

void run_synth(const Ctx& ctx) {
  auto cfg = synth_config(ctx);
  const auto data = synth::generate_shops(cfg);
  const int n_train = ctx.m.get_int("synth.cross_train", 12510);
  const int n_eval = ctx.m.get_int("synth.cross_eval", 12510);
  auto cross = synth::generate_cross_sessions(cfg, data, n_train + n_eval);
  std::vector<corpus::CrossSession> cross_train(cross.begin(), cross.begin() + n_train);
  std::vector<corpus::CrossSession> cross_eval(cross.begin() + n_train, cross.end());
  const auto queries = synth::generate_queries(cfg, data, cross_eval,
                                               ctx.m.get_int("synth.queries", 5000));

  io::write_events(ctx.paths.s("synth/events_a.tsv"), data.events_a);
  io::write_events(ctx.paths.s("synth/events_b.tsv"), data.events_b);
  io::write_catalog(ctx.paths.s("synth/catalog_a.tsv"), data.catalog_a);
  io::write_catalog(ctx.paths.s("synth/catalog_b.tsv"), data.catalog_b);
  io::write_ground_truth(ctx.paths.s("synth/ground_truth.tsv"), data.truth.correspondence);
  io::write_cross_sessions(ctx.paths.s("synth/cross_train.tsv"), cross_train);
  io::write_cross_sessions(ctx.paths.s("synth/cross_eval.tsv"), cross_eval);
  io::write_queries(ctx.paths.s("synth/queries_train.tsv"), queries.train);
  std::vector<corpus::Session> query_sessions;
  query_sessions.reserve(queries.train.size());
  for (const auto& q : queries.train) query_sessions.push_back(q.session);
  io::write_sessions(ctx.paths.s("synth/query_sessions.tsv"), query_sessions);
  io::write_queries(ctx.paths.s("synth/queries_cross.tsv"), queries.cross_truth);
}

void run_corpus(const Ctx& ctx) {
  corpus::SessionizeOptions opts;
  opts.bot_event_threshold =
      static_cast<std::size_t>(ctx.m.get_int("corpus.bot_threshold", 100));
  opts.bot_min_median_gap_ms = ctx.m.get_int("corpus.bot_min_gap_ms", 200);

  json stats;
  for (const std::string shop : {"a", "b"}) {
    const auto parsed = io::read_events(
        ctx.paths.s("synth/events_" + shop + ".tsv"),
        {.malformed_tolerance = ctx.m.get_double("corpus.malformed_tolerance", 0.0)});
    const auto sessionized = corpus::sessionize(parsed.events, opts);
    io::write_sessions(ctx.paths.s("corpus/sessions_" + shop + ".tsv"), sessionized.sessions);
    const auto cs = corpus::stats(sessionized.sessions);
    stats[shop] = {{"sessions", cs.session_count},
                   {"events", cs.event_count},
                   {"skus", cs.sku_count},
                   {"pct25", cs.length_percentiles[0]},
                   {"pct50", cs.length_percentiles[1]},
                   {"pct75", cs.length_percentiles[2]},
                   {"bot_filtered", sessionized.bot_filtered},
                   {"short_filtered", sessionized.short_filtered},
                   {"malformed_lines", parsed.malformed_count}};
  }
  io::write_text_file(ctx.paths.s("corpus/stats.json"), stats.dump(2));
}

json grid_entry_json(const eval::GridEntry& e) {
  return json{{"min_count", e.config.min_count}, {"window", e.config.window},
              {"epochs", e.config.epochs},       {"ns_exponent", e.config.ns_exponent},
              {"ndcg", e.ndcg},                  {"hit_rate", e.hit_rate}};
}

void run_embed(const Ctx& ctx) {
  const std::string grid_mode = ctx.m.get("embed.grid", "none");
  for (const std::string shop : {"a", "b"}) {
    const auto sessions = io::read_sessions(ctx.paths.s("corpus/sessions_" + shop + ".tsv"));
    std::vector<corpus::Session> train_full;  // train + validation
    for (const auto& s : sessions) {
      if (eval::split_of(s.session_id) != eval::Split::Test) train_full.push_back(s);
    }

    embed::TrainConfig base = embed_config(ctx);
    base.rng_seed = ctx.stage_seed("embed-" + shop);
    embed::TrainConfig best = base, worst = base;

    if (grid_mode != "none") {
      eval::GridSpec spec;
      spec.base = base;
      if (grid_mode == "small") {
        spec.min_counts = {5, 15};
        spec.windows = {2, 10};
        spec.epochs = {base.epochs, std::max(1, base.epochs / 4)};
        spec.ns_exponents = {-0.5, 0.75};
      } else if (grid_mode != "full") {
        throw ValidationError("embed.grid must be none, small or full");
      }
      auto configs = eval::expand_grid(spec);
      const int cap = ctx.m.get_int("embed.grid_max", 0);
      if (cap > 0) configs = eval::subsample_grid(configs, cap, ctx.stage_seed("grid-" + shop));
      const auto entries = eval::grid_search(sessions, configs);
      json out = json::array();
      for (const auto& e : entries) out.push_back(grid_entry_json(e));
      io::write_text_file(ctx.paths.s("embed/grid_" + shop + ".json"), out.dump(2));
      best = entries.front().config;
      worst = entries.back().config;
    }

    const auto table = embed::train(train_full, best);
    io::write_embeddings(ctx.paths.s("embed/embeddings_" + shop + ".vec"), table);
    if (grid_mode != "none") {
      const auto worst_table = embed::train(train_full, worst);
      io::write_embeddings(ctx.paths.s("embed/embeddings_" + shop + "_worst.vec"), worst_table);
    }
  }
}

void run_align(const Ctx& ctx) {
  const auto table_a = io::read_embeddings(ctx.paths.s("embed/embeddings_a.vec"));
  const auto table_b = io::read_embeddings(ctx.paths.s("embed/embeddings_b.vec"));
  const auto cfg = synth_config(ctx);

  for (const auto& method : manifest_methods(ctx)) {
    if (method == "im") {
      const auto cat_a = io::read_catalog(ctx.paths.s("synth/catalog_a.tsv"));
      const auto cat_b = io::read_catalog(ctx.paths.s("synth/catalog_b.tsv"));
      const auto seed = align::build_feature_seed(
          cat_a, cat_b, ctx.m.get_int("align.pca_dim", 20), ctx.m.get_int("align.clusters", 50),
          ctx.stage_seed("align-im"));
      io::write_seed_dictionary(ctx.paths.s("align/seed_im.tsv"), seed);
      align::SelfLearningOptions opts;
      opts.max_iters = ctx.m.get_int("align.max_iters", 50);
      const auto result = align::self_learning_align(seed, table_a, table_b, opts);
      io::write_alignment_map(ctx.paths.s("align/map_im.txt"), result.map);
    } else if (method == "nm") {
      align::NmOptions opts;
      opts.self_learning.max_iters = ctx.m.get_int("align.max_iters", 50);
      const auto result = align::nm_align(table_a, table_b, opts);
      io::write_alignment_map(ctx.paths.s("align/map_nm.txt"), result.map);
    } else if (method == "um") {
      const auto cross = io::read_cross_sessions(ctx.paths.s("synth/cross_train.tsv"),
                                                 cfg.shop_id_a, cfg.shop_id_b);
      align::RegressionOptions opts;
      opts.ridge_lambda = ctx.m.get_double("align.ridge", 1e-3);
      const auto map = align::pair_regression_align(cross, table_a, table_b, opts);
      io::write_alignment_map(ctx.paths.s("align/map_um.txt"), map);
    } else if (method == "am") {
      const auto cat_a = io::read_catalog(ctx.paths.s("synth/catalog_a.tsv"));
      const auto cat_b = io::read_catalog(ctx.paths.s("synth/catalog_b.tsv"));
      align::RegressionOptions opts;
      opts.ridge_lambda = ctx.m.get_double("align.ridge", 1e-3);
      const auto map = align::centroid_align(cat_a, cat_b,
                                             ctx.m.get_int("align.n_per_category", 20), table_a,
                                             table_b, ctx.stage_seed("align-am"), opts);
      io::write_alignment_map(ctx.paths.s("align/map_am.txt"), map);
    } else if (method == "tm") {
      const auto cross = io::read_cross_sessions(ctx.paths.s("synth/cross_train.tsv"),
                                                 cfg.shop_id_a, cfg.shop_id_b);
      align::TmConfig tm_cfg;
      tm_cfg.hidden = ctx.m.get_int("align.tm_hidden", 64);
      tm_cfg.epochs = ctx.m.get_int("align.tm_epochs", 8);
      tm_cfg.learning_rate = ctx.m.get_double("align.tm_learning_rate", 0.05);
      tm_cfg.max_decode_steps = ctx.m.get_int("align.tm_decode_steps", 5);
      tm_cfg.rng_seed = ctx.stage_seed("align-tm");
      const auto model = align::tm_train(cross, table_a, table_b, tm_cfg);
      io::write_tm_model(ctx.paths.s("align/tm_model.json"), model);
    } else {
      throw ValidationError("unknown align method in manifest: " + method);
    }
  }
}

std::vector<std::string> vocab_labels(const corpus::Vocabulary& vocab, const Catalog& catalog) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(vocab.size()));
  for (int i = 0; i < vocab.size(); ++i) {
    const auto row = catalog.row_of(vocab.product(i));
    if (!row) throw ValidationError("product missing from catalog: " + vocab.product(i));
    labels.push_back(catalog.activities[static_cast<std::size_t>(*row)]);
  }
  return labels;
}

void write_projection(const std::string& path, const embed::EmbeddingTable& table,
                      const std::vector<std::string>& labels) {
  const Mat coords = eval::projection_2d(table);
  std::ostringstream out;
  out << std::setprecision(17);
  for (int i = 0; i < table.size(); ++i) {
    out << table.vocab.product(i) << '\t' << coords(i, 0) << '\t' << coords(i, 1) << '\t'
        << labels[static_cast<std::size_t>(i)] << '\n';
  }
  io::write_text_file(path, out.str());
}

void run_eval(const Ctx& ctx) {
  const auto cfg = synth_config(ctx);
  const int k = ctx.m.get_int("eval.k", 10);
  const auto table_a = io::read_embeddings(ctx.paths.s("embed/embeddings_a.vec"));
  const auto table_b = io::read_embeddings(ctx.paths.s("embed/embeddings_b.vec"));
  const auto cat_a = io::read_catalog(ctx.paths.s("synth/catalog_a.tsv"));
  const auto cat_b = io::read_catalog(ctx.paths.s("synth/catalog_b.tsv"));
  const auto labels_a = vocab_labels(table_a.vocab, cat_a);
  const auto labels_b = vocab_labels(table_b.vocab, cat_b);

  json summary;

  // Within-shop NEP on the held-out test split.
  for (const std::string shop : {"a", "b"}) {
    const auto sessions = io::read_sessions(ctx.paths.s("corpus/sessions_" + shop + ".tsv"));
    const auto test = eval::take_split(sessions, eval::Split::Test);
    const auto& table = shop == "a" ? table_a : table_b;
    const auto report = eval::nep_within_shop(test, table, {.k = k});
    io::write_report_jsonl(ctx.paths.s("eval/nep_" + shop + ".jsonl"), report);
    summary["nep"][shop] = {{"ndcg", report.ndcg},
                            {"hit_rate", report.hit_rate},
                            {"evaluated", report.evaluated},
                            {"skipped", report.skipped}};
  }

  const auto cross = io::read_cross_sessions(ctx.paths.s("synth/cross_eval.tsv"), cfg.shop_id_a,
                                             cfg.shop_id_b);

  // PM floor from the target training corpus.
  const auto sessions_b = io::read_sessions(ctx.paths.s("corpus/sessions_b.tsv"));
  std::vector<corpus::Session> pm_corpus;
  for (const auto& s : sessions_b) {
    if (eval::split_of(s.session_id) != eval::Split::Test) pm_corpus.push_back(s);
  }
  const auto pm_ranking = eval::popularity_baseline(pm_corpus, table_b.vocab);

  const auto run_method = [&](const std::string& name, const eval::CrossRanker& ranker,
                              const std::string& type) {
    const auto reports = eval::cross_shop_eval(cross, ranker, table_b, k);
    io::write_report_jsonl(ctx.paths.s("eval/cross_" + name + "_fip.jsonl"), reports.fip);
    io::write_report_jsonl(ctx.paths.s("eval/cross_" + name + "_aip.jsonl"), reports.aip);
    summary["cross"][name] = {{"type", type},
                              {"fip", reports.fip.ndcg},
                              {"aip", reports.aip.ndcg},
                              {"fip_hit", reports.fip.hit_rate},
                              {"aip_hit", reports.aip.hit_rate},
                              {"skipped", reports.fip.skipped}};
    return reports;
  };

  run_method("pm", eval::make_static_ranker(pm_ranking), "unsupervised");

  std::optional<eval::CrossShopReports> im_reports;
  std::optional<align::AlignmentMap> im_map;
  align::TranslationModel tm_model;
  for (const auto& method : manifest_methods(ctx)) {
    if (method == "tm") {
      tm_model = io::read_tm_model(ctx.paths.s("align/tm_model.json"));
      run_method("tm", eval::make_tm_ranker(tm_model, k), "supervised");
    } else {
      const auto map = io::read_alignment_map(ctx.paths.s("align/map_" + method + ".txt"));
      const std::string type = method == "um" ? "supervised"
                               : method == "am" ? "semi-supervised" : "unsupervised";
      auto reports = run_method(method, eval::make_map_ranker(map, table_a, table_b, k), type);
      if (method == "im") {
        im_reports = std::move(reports);
        im_map = map;
      }
    }
  }

  // Activity probe on the source shop embeddings. A tiny vocabulary can
  // leave a class under-populated; that renders as a missing metric.
  eval::ProbeConfig probe_cfg;
  probe_cfg.epochs = ctx.m.get_int("eval.probe_epochs", 50);
  probe_cfg.rng_seed = ctx.stage_seed("probe");
  const auto try_probe = [&](const embed::EmbeddingTable& table,
                             const std::vector<std::string>& labels) -> json {
    try {
      return eval::probe_train_eval(table, labels, 0.25, probe_cfg);
    } catch (const ValidationError&) {
      return nullptr;
    }
  };
  summary["probe"]["a"] = try_probe(table_a, labels_a);
  if (fs::exists(ctx.paths.of("embed/embeddings_a_worst.vec"))) {
    const auto worst = io::read_embeddings(ctx.paths.s("embed/embeddings_a_worst.vec"));
    summary["probe"]["a_worst"] = try_probe(worst, vocab_labels(worst.vocab, cat_a));
  }

  // Cross-shop activity probes and error analysis ride on the IM alignment.
  if (im_map) {
    Mat mapped(table_a.size(), table_b.dimension());
    for (int i = 0; i < table_a.size(); ++i) {
      mapped.row(i) =
          align::translate_point(*im_map, table_a.u.row(i).transpose()).transpose();
    }
    try {
      summary["transfer_probe"] =
          eval::probe_transfer_eval(mapped, labels_a, Mat(table_b.u), labels_b, probe_cfg);
    } catch (const ValidationError&) {
      summary["transfer_probe"] = nullptr;
    }

    const auto analysis = eval::error_analysis(im_reports->fip, table_b, &labels_b);
    std::ostringstream misses;
    misses << std::setprecision(17);
    for (const auto& miss : analysis.misses) {
      misses << json{{"session", miss.session_id},
                     {"predicted", table_b.vocab.product(miss.predicted)},
                     {"target", table_b.vocab.product(miss.target)},
                     {"distance", miss.distance},
                     {"activity_match", miss.activity_match}}
                    .dump()
             << '\n';
    }
    io::write_text_file(ctx.paths.s("eval/errors_im.jsonl"), misses.str());
    summary["errors"] = {{"misses", analysis.misses.size()},
                         {"median_distance", analysis.median_distance},
                         {"overall_match_rate", analysis.overall_match_rate},
                         {"below_median_match_rate", analysis.below_median_match_rate},
                         {"above_median_match_rate", analysis.above_median_match_rate}};
  }

  write_projection(ctx.paths.s("eval/projection_a.tsv"), table_a, labels_a);
  write_projection(ctx.paths.s("eval/projection_b.tsv"), table_b, labels_b);
  io::write_text_file(ctx.paths.s("eval/summary_eval.json"), summary.dump(2));
}

void run_typeahead(const Ctx& ctx) {
  const auto cfg = synth_config(ctx);
  const auto table_a = io::read_embeddings(ctx.paths.s("embed/embeddings_a.vec"));
  const auto table_b = io::read_embeddings(ctx.paths.s("embed/embeddings_b.vec"));

  const auto train_records = io::read_queries(ctx.paths.s("synth/queries_train.tsv"));
  const auto query_sessions = io::read_sessions(ctx.paths.s("synth/query_sessions.tsv"));
  const auto train_items = io::attach_sessions(train_records, query_sessions);

  std::vector<std::optional<Vec>> intents;
  intents.reserve(train_items.size());
  for (const auto& item : train_items) {
    try {
      intents.emplace_back(embed::session_vector(item.session.products, table_b));
    } catch (const ValidationError&) {
      intents.emplace_back(std::nullopt);
    }
  }

  typeahead::LmConfig lm_cfg;
  lm_cfg.hidden = ctx.m.get_int("typeahead.hidden", 64);
  lm_cfg.epochs = ctx.m.get_int("typeahead.epochs", 25);
  lm_cfg.learning_rate = ctx.m.get_double("typeahead.learning_rate", 1.0);
  lm_cfg.rng_seed = ctx.stage_seed("typeahead");
  const auto lm = typeahead::lm_train(train_items, intents, table_b.dimension(), lm_cfg);
  io::write_lm_model(ctx.paths.s("typeahead/lm_b.json"), lm);

  const auto pool =
      typeahead::popularity_pool(train_items, ctx.m.get_int("typeahead.top_m", 35));

  const auto cross = io::read_cross_sessions(ctx.paths.s("synth/cross_eval.tsv"), cfg.shop_id_a,
                                             cfg.shop_id_b);
  std::vector<corpus::Session> cross_sources;
  cross_sources.reserve(cross.size());
  for (const auto& cs : cross) cross_sources.push_back(cs.source);
  const auto cross_records = io::read_queries(ctx.paths.s("synth/queries_cross.tsv"));
  auto cross_items = io::attach_sessions(cross_records, cross_sources);
  const int max_items = ctx.m.get_int("typeahead.eval_items", 2000);
  if (static_cast<int>(cross_items.size()) > max_items) {
    cross_items.resize(static_cast<std::size_t>(max_items));
  }

  // Per-method transferred intents.
  std::map<std::string, std::vector<typeahead::TypeaheadItem>> method_items;
  const auto add_method = [&](const std::string& name, auto&& intent_of) {
    auto& items = method_items[name];
    items.reserve(cross_items.size());
    for (const auto& q : cross_items) {
      typeahead::TypeaheadItem item;
      item.ground_truth = q.query;
      try {
        item.intent = intent_of(q.session);
      } catch (const ValidationError&) {
        item.intent = std::nullopt;
      }
      items.push_back(std::move(item));
    }
  };

  add_method("pm", [](const corpus::Session&) -> std::optional<Vec> { return std::nullopt; });
  for (const auto& method : manifest_methods(ctx)) {
    if (method == "im" || method == "um") {
      const auto map = io::read_alignment_map(ctx.paths.s("align/map_" + method + ".txt"));
      add_method(method, [map, &table_a](const corpus::Session& s) -> std::optional<Vec> {
        return align::translate_point(map, embed::session_vector(s.products, table_a));
      });
    } else if (method == "tm") {
      const auto tm = io::read_tm_model(ctx.paths.s("align/tm_model.json"));
      add_method(method, [tm, &table_b](const corpus::Session& s) -> std::optional<Vec> {
        std::vector<int> ids;
        for (const auto& p : s.products) {
          if (auto id = tm.source_vocab.id_of(p)) ids.push_back(*id);
        }
        const auto decoded = align::tm_greedy_decode(tm, ids, tm.config.max_decode_steps);
        Vec intent = Vec::Zero(table_b.dimension());
        for (int id : decoded) intent += tm.tgt_embed.row(id).transpose();
        return intent / static_cast<double>(decoded.size());
      });
    }
  }

  const int k = ctx.m.get_int("typeahead.k", 5);
  json summary;
  for (const auto& [name, items] : method_items) {
    for (int sl : {0, 1}) {
      const auto report = typeahead::typeahead_eval(name == "pm" ? nullptr : &lm, pool, items,
                                                    sl, k);
      summary[name]["sl" + std::to_string(sl)] = report.mrr;
      summary[name]["evaluated"] = report.evaluated;
      summary[name]["skipped"] = report.skipped;
    }
  }
  io::write_text_file(ctx.paths.s("typeahead/summary_typeahead.json"), summary.dump(2));
}

// ---------- orchestration -------------------------------------------------

json load_lock(const Paths& paths) {
  const auto path = paths.of("manifest.lock.json");
  if (!fs::exists(path)) return json::object();
  return json::parse(io::read_text_file(path.string()));
}

void save_lock(const Paths& paths, const json& lock) {
  io::write_text_file(paths.s("manifest.lock.json"), lock.dump(2));
}

std::string input_state(const Ctx& ctx, const std::string& stage) {
  std::string combined;
  for (const auto& rel : stage_inputs(ctx, stage)) {
    combined += rel;
    combined += ':';
    const auto p = ctx.paths.of(rel);
    combined += fs::exists(p) ? io::file_checksum(p.string()) : std::string("missing");
    combined += '\n';
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(combined);
  return os.str();
}

bool outputs_intact(const Ctx& ctx, const json& recorded) {
  for (auto it = recorded.begin(); it != recorded.end(); ++it) {
    const auto p = ctx.paths.of(it.key());
    if (!fs::exists(p)) return false;
    if (io::file_checksum(p.string()) != it.value().get<std::string>()) return false;
  }
  return !recorded.empty();
}

}  // namespace

PipelineResult run_pipeline(const Manifest& manifest, const std::string& out_dir,
                            const std::vector<std::string>& only_stages) {
  Ctx ctx{manifest, Paths{fs::path(out_dir)}, manifest.get_u64("seed", 42),
          manifest.get_bool("deterministic", true)};

  for (const auto& s : only_stages) {
    if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end()) {
      throw ValidationError("unknown stage requested: " + s);
    }
  }

  fs::create_directories(ctx.paths.root);
  for (const auto& stage : stage_names()) fs::create_directories(ctx.paths.of(stage));

  json lock = load_lock(ctx.paths);
  const std::string fingerprint = manifest.fingerprint();
  if (lock.value("manifest_fingerprint", "") != fingerprint) {
    lock = json{{"manifest_fingerprint", fingerprint}, {"stages", json::object()}};
  }

  PipelineResult result;
  for (const auto& stage : stage_names()) {
    if (!only_stages.empty() &&
        std::find(only_stages.begin(), only_stages.end(), stage) == only_stages.end()) {
      continue;
    }
    StageResult sr;
    sr.name = stage;
    const std::string in_state = input_state(ctx, stage);
    const bool recorded = lock["stages"].contains(stage) &&
                          lock["stages"][stage].value("inputs", "") == in_state &&
                          outputs_intact(ctx, lock["stages"][stage]["outputs"]);
    if (recorded) {
      sr.skipped = true;
      for (const auto& rel : stage_outputs(ctx, stage)) sr.outputs.push_back(rel);
      result.stages.push_back(std::move(sr));
      continue;
    }

    try {
      if (stage == "synth") run_synth(ctx);
      else if (stage == "corpus") run_corpus(ctx);
      else if (stage == "embed") run_embed(ctx);
      else if (stage == "align") run_align(ctx);
      else if (stage == "eval") run_eval(ctx);
      else if (stage == "typeahead") run_typeahead(ctx);
    } catch (const Error& e) {
      throw TrainingError("stage '" + stage + "' failed: " + e.what());
    }

    json outputs = json::object();
    for (const auto& rel : stage_outputs(ctx, stage)) {
      const auto p = ctx.paths.of(rel);
      if (!fs::exists(p)) {
        throw TrainingError("stage '" + stage + "' did not produce " + rel);
      }
      outputs[rel] = io::file_checksum(p.string());
      sr.outputs.push_back(rel);
    }
    lock["stages"][stage] = {{"inputs", in_state}, {"outputs", outputs}};
    save_lock(ctx.paths, lock);
    result.stages.push_back(std::move(sr));
  }

  result.report = render_report(out_dir);
  io::write_text_file(ctx.paths.s("report.txt"), result.report);
  return result;
}

namespace {

std::string num_or_na(const json& j, std::initializer_list<const char*> keys,
                      int precision = 5) {
  const json* cur = &j;
  for (const char* k : keys) {
    if (!cur->contains(k)) return "n/a";
    cur = &(*cur)[k];
  }
  if (cur->is_number()) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << cur->get<double>();
    return os.str();
  }
  return cur->is_string() ? cur->get<std::string>() : "n/a";
}

}  // namespace

std::string render_report(const std::string& out_dir) {
  const auto maybe_json = [&](const std::string& rel) -> json {
    const auto p = fs::path(out_dir) / rel;
    if (!fs::exists(p)) return json::object();
    return json::parse(io::read_text_file(p.string()));
  };

  const json stats = maybe_json("corpus/stats.json");
  const json eval_summary = maybe_json("eval/summary_eval.json");
  const json ta_summary = maybe_json("typeahead/summary_typeahead.json");

  std::ostringstream out;
  out << "shopalign run report\n";
  out << "====================\n\n";

  if (!stats.empty()) {
    out << "corpus\n------\n";
    for (const std::string shop : {"a", "b"}) {
      if (!stats.contains(shop)) continue;
      const auto& s = stats[shop];
      out << "shop " << shop << ": sessions=" << s.value("sessions", 0)
          << " events=" << s.value("events", 0) << " skus=" << s.value("skus", 0)
          << " pct=" << s.value("pct25", 0) << "/" << s.value("pct50", 0) << "/"
          << s.value("pct75", 0) << " bot_filtered=" << s.value("bot_filtered", 0) << "\n";
    }
    out << "\n";
  }

  for (const std::string shop : {"a", "b"}) {
    const json grid = maybe_json("embed/grid_" + shop + ".json");
    if (grid.empty() || !grid.is_array() || grid.size() == 0) continue;
    const auto row = [&](const json& e) {
      std::ostringstream os;
      os << "min_count=" << e.value("min_count", 0) << " window=" << e.value("window", 0)
         << " iter=" << e.value("epochs", 0) << " exp=" << e.value("ns_exponent", 0.0)
         << " NDCG@10=" << std::fixed << std::setprecision(5) << e.value("ndcg", 0.0);
      return os.str();
    };
    out << "embedding grid, shop " << shop << " (best/worst by held-out NDCG@10)\n";
    out << "  best:  " << row(grid.front()) << "\n";
    out << "  worst: " << row(grid.back()) << "\n\n";
  }

  if (eval_summary.contains("nep")) {
    out << "within-shop next event prediction (test split)\n";
    for (const std::string shop : {"a", "b"}) {
      out << "  shop " << shop << ": NDCG@10=" << num_or_na(eval_summary, {"nep", shop.c_str(), "ndcg"})
          << " H@10=" << num_or_na(eval_summary, {"nep", shop.c_str(), "hit_rate"}) << "\n";
    }
    out << "\n";
  }

  if (eval_summary.contains("cross")) {
    out << "cross-shop NDCG@10 (FIP / AIP)\n";
    out << "  model  type             FIP        AIP\n";
    std::vector<std::pair<std::string, std::string>> rows = {
        {"pm", "unsupervised"}, {"nm", "unsupervised"},   {"im", "unsupervised"},
        {"am", "semi-supervised"}, {"um", "supervised"},  {"tm", "supervised"}};
    // Group by supervision type, ascending score within each block.
    const auto fip_of = [&](const std::string& name) {
      return eval_summary["cross"].contains(name)
                 ? eval_summary["cross"][name].value("fip", 0.0)
                 : -1.0;
    };
    const std::vector<std::string> type_order = {"unsupervised", "semi-supervised",
                                                 "supervised"};
    std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
      const auto ta = std::find(type_order.begin(), type_order.end(), a.second);
      const auto tb = std::find(type_order.begin(), type_order.end(), b.second);
      if (ta != tb) return ta < tb;
      return fip_of(a.first) < fip_of(b.first);
    });
    // Best score per supervision type gets a marker.
    std::map<std::string, double> best_per_type;
    for (const auto& [name, type] : rows) {
      if (!eval_summary["cross"].contains(name)) continue;
      const double fip = eval_summary["cross"][name].value("fip", 0.0);
      auto [it, inserted] = best_per_type.try_emplace(type, fip);
      if (!inserted && fip > it->second) it->second = fip;
    }
    for (const auto& [name, type] : rows) {
      std::string upper = name;
      std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
      out << "  " << std::left << std::setw(7) << upper << std::setw(17) << type;
      if (!eval_summary["cross"].contains(name)) {
        out << "n/a        n/a\n";
        continue;
      }
      const double fip = eval_summary["cross"][name].value("fip", 0.0);
      const bool best = best_per_type.count(type) && fip == best_per_type[type];
      out << (best ? "*" : " ") << num_or_na(eval_summary, {"cross", name.c_str(), "fip"})
          << "   " << num_or_na(eval_summary, {"cross", name.c_str(), "aip"}) << "\n";
    }
    out << "  (* best per supervision type on FIP)\n\n";
  }

  if (eval_summary.contains("probe") || eval_summary.contains("transfer_probe")) {
    out << "activity probes\n";
    out << "  shop A accuracy:            " << num_or_na(eval_summary, {"probe", "a"}) << "\n";
    out << "  shop A accuracy (worst):    " << num_or_na(eval_summary, {"probe", "a_worst"})
        << "\n";
    out << "  cross-shop transfer (A->B): " << num_or_na(eval_summary, {"transfer_probe"})
        << "\n\n";
  }

  if (eval_summary.contains("errors")) {
    out << "error analysis (IM misses)\n";
    out << "  activity match overall:      "
        << num_or_na(eval_summary, {"errors", "overall_match_rate"}) << "\n";
    out << "  activity match below median: "
        << num_or_na(eval_summary, {"errors", "below_median_match_rate"}) << "\n";
    out << "  activity match above median: "
        << num_or_na(eval_summary, {"errors", "above_median_match_rate"}) << "\n\n";
  }

  if (!ta_summary.empty()) {
    out << "type-ahead MRR@5\n";
    out << "  model  SL=0       SL=1\n";
    for (const std::string name : {"pm", "im", "um", "tm"}) {
      std::string upper = name;
      std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
      out << "  " << std::left << std::setw(7) << upper
          << num_or_na(ta_summary, {name.c_str(), "sl0"}) << "    "
          << num_or_na(ta_summary, {name.c_str(), "sl1"}) << "\n";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace shopalign::pipeline
