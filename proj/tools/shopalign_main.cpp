// shopalign: train, align and evaluate cross-shop product embeddings.

#include <CLI11.hpp>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "shopalign/eval.hpp"
#include "shopalign/io.hpp"
#include "shopalign/pipeline.hpp"
#include "shopalign/probe.hpp"
#include "shopalign/synth.hpp"
#include "shopalign/typeahead.hpp"

using namespace shopalign;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 42;
  bool deterministic = true;
  std::string out_dir = "out";
};

std::vector<corpus::Session> load_sessions_from_events(const std::string& path,
                                                       double malformed_tolerance,
                                                       const corpus::SessionizeOptions& opts,
                                                       corpus::SessionizeResult* full = nullptr) {
  const auto parsed = io::read_events(path, {.malformed_tolerance = malformed_tolerance});
  auto result = corpus::sessionize(parsed.events, opts);
  if (full) *full = result;
  return result.sessions;
}

eval::Split parse_split(const std::string& name) {
  if (name == "train") return eval::Split::Train;
  if (name == "validation") return eval::Split::Validation;
  if (name == "test") return eval::Split::Test;
  throw ValidationError("unknown split: " + name);
}

void print_report_line(const std::string& tag, const eval::EvalReport& r) {
  std::cout << tag << ": NDCG@" << r.k << "=" << std::fixed << std::setprecision(5) << r.ndcg
            << " H@" << r.k << "=" << r.hit_rate << " MRR=" << r.mrr
            << " evaluated=" << r.evaluated << " skipped=" << r.skipped << "\n";
}

align::AlignmentMap load_map_checked(const std::string& path) {
  if (!fs::exists(path)) throw IoError("alignment map not found: " + path);
  return io::read_alignment_map(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"product embedding training, alignment and zero-shot evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--seed", g.seed, "master RNG seed")->capture_default_str();
  app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
               "single-threaded, reproducible runs");
  app.add_option("--out-dir", g.out_dir, "output directory for pipeline stages")
      ->capture_default_str();

  // ---- synth ---------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "synthetic two-shop generator");
  auto* synth_gen = synth_cmd->add_subcommand("generate", "emit events, catalogs and queries");
  std::string preset = "paper-scale-0.01";
  synth_gen->add_option("--preset", preset, "paper-scale-0.01 or ci-small")
      ->capture_default_str();
  synth_gen->callback([&] {
    pipeline::Manifest m;
    m.set("seed", std::to_string(g.seed));
    m.set("deterministic", g.deterministic ? "true" : "false");
    m.set("preset", preset);
    const auto result = pipeline::run_pipeline(m, g.out_dir, {"synth"});
    for (const auto& s : result.stages) {
      std::cout << "stage " << s.name << (s.skipped ? " (up to date)" : " done") << ", "
                << s.outputs.size() << " files under " << g.out_dir << "\n";
    }
  });

  // ---- corpus --------------------------------------------------------
  auto* corpus_cmd = app.add_subcommand("corpus", "ingest and sessionize event logs");
  std::string events_path, sessions_out;
  double malformed_tolerance = 0.0;
  corpus::SessionizeOptions sess_opts;
  int min_count = 5;

  auto* corpus_stats = corpus_cmd->add_subcommand("stats", "descriptive corpus statistics");
  corpus_stats->add_option("--events", events_path, "event file (TSV)")->required();
  corpus_stats->add_option("--malformed-tolerance", malformed_tolerance)->capture_default_str();
  corpus_stats->add_option("--bot-threshold", sess_opts.bot_event_threshold)
      ->capture_default_str();
  corpus_stats->add_option("--bot-min-gap-ms", sess_opts.bot_min_median_gap_ms)
      ->capture_default_str();
  corpus_stats->callback([&] {
    corpus::SessionizeResult full;
    const auto sessions =
        load_sessions_from_events(events_path, malformed_tolerance, sess_opts, &full);
    const auto cs = corpus::stats(sessions);
    std::cout << "sessions=" << cs.session_count << " events=" << cs.event_count
              << " skus=" << cs.sku_count << " pct25/50/75=" << cs.length_percentiles[0] << "/"
              << cs.length_percentiles[1] << "/" << cs.length_percentiles[2]
              << " bot_filtered=" << full.bot_filtered
              << " short_filtered=" << full.short_filtered << "\n";
  });

  auto* corpus_build = corpus_cmd->add_subcommand("build", "build the training corpus");
  corpus_build->add_option("--events", events_path)->required();
  corpus_build->add_option("--min-count", min_count)->capture_default_str();
  corpus_build->add_option("--out", sessions_out, "session file to write")->required();
  corpus_build->add_option("--malformed-tolerance", malformed_tolerance)->capture_default_str();
  corpus_build->callback([&] {
    const auto sessions =
        load_sessions_from_events(events_path, malformed_tolerance, sess_opts);
    const auto vocab = corpus::build_vocab(sessions, min_count);
    const auto restricted = corpus::restrict_to_vocab(sessions, vocab);
    io::write_sessions(sessions_out, restricted);
    std::cout << "vocabulary=" << vocab.size() << " products, sessions kept "
              << restricted.size() << "/" << sessions.size() << " -> " << sessions_out << "\n";
  });

  // ---- embed ---------------------------------------------------------
  auto* embed_cmd = app.add_subcommand("embed", "train product embeddings");
  auto* embed_train = embed_cmd->add_subcommand("train", "CBOW with negative sampling");
  std::string sessions_path, emb_out;
  embed::TrainConfig train_cfg;
  embed_train->add_option("--sessions", sessions_path, "session file")->required();
  embed_train->add_option("--out", emb_out, "embedding file to write")->required();
  embed_train->add_option("--dim", train_cfg.dimension)->capture_default_str();
  embed_train->add_option("--window", train_cfg.window)->capture_default_str();
  embed_train->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  embed_train->add_option("--min-count", train_cfg.min_count)->capture_default_str();
  embed_train->add_option("--ns-exponent", train_cfg.ns_exponent)->capture_default_str();
  embed_train->add_option("--negatives", train_cfg.negatives_per_positive)
      ->capture_default_str();
  embed_train->add_option("--learning-rate", train_cfg.learning_rate)->capture_default_str();
  embed_train->add_option("--threads", train_cfg.threads)->capture_default_str();
  embed_train->callback([&] {
    train_cfg.rng_seed = g.seed;
    if (g.deterministic) train_cfg.threads = 1;
    const auto sessions = io::read_sessions(sessions_path);
    embed::TrainStats stats;
    const auto table = embed::train(sessions, train_cfg, &stats);
    io::write_embeddings(emb_out, table);
    std::cout << "trained " << table.size() << " x " << table.dimension() << " -> " << emb_out;
    if (!stats.epoch_mean_loss.empty()) {
      std::cout << " (loss " << std::setprecision(4) << stats.epoch_mean_loss.front() << " -> "
                << stats.epoch_mean_loss.back() << ")";
    }
    std::cout << "\n";
  });

  // ---- align ---------------------------------------------------------
  auto* align_cmd = app.add_subcommand("align", "map one embedding space onto another");
  std::string source_emb, target_emb, catalog_a_path, catalog_b_path, cross_path;
  std::string source_shop = "A", target_shop = "B", map_out, seed_dict_out, tm_out;
  int pca_dim = 20, clusters = 50, max_iters = 50, n_per_category = 20;
  double ridge = 1e-3;
  align::TmConfig tm_cfg;

  const auto add_tables = [&](CLI::App* cmd) {
    cmd->add_option("--source-emb", source_emb)->required();
    cmd->add_option("--target-emb", target_emb)->required();
  };
  const auto add_cross = [&](CLI::App* cmd) {
    cmd->add_option("--cross", cross_path, "cross-shop session event file")->required();
    cmd->add_option("--source-shop", source_shop)->capture_default_str();
    cmd->add_option("--target-shop", target_shop)->capture_default_str();
  };

  auto* align_im = align_cmd->add_subcommand("im", "feature-seeded self-learning");
  add_tables(align_im);
  align_im->add_option("--catalog-a", catalog_a_path)->required();
  align_im->add_option("--catalog-b", catalog_b_path)->required();
  align_im->add_option("--pca-dim", pca_dim)->capture_default_str();
  align_im->add_option("--clusters", clusters)->capture_default_str();
  align_im->add_option("--max-iters", max_iters)->capture_default_str();
  align_im->add_option("--out", map_out)->required();
  align_im->add_option("--seed-dict-out", seed_dict_out, "also write the bootstrap seed");
  align_im->callback([&] {
    const auto src = io::read_embeddings(source_emb);
    const auto tgt = io::read_embeddings(target_emb);
    const auto cat_a = io::read_catalog(catalog_a_path);
    const auto cat_b = io::read_catalog(catalog_b_path);
    const auto seed = align::build_feature_seed(cat_a, cat_b, pca_dim, clusters, g.seed);
    if (!seed_dict_out.empty()) io::write_seed_dictionary(seed_dict_out, seed);
    const auto result = align::self_learning_align(seed, src, tgt, {.max_iters = max_iters});
    io::write_alignment_map(map_out, result.map);
    std::cout << "seed pairs=" << seed.pairs.size() << " iterations="
              << result.dictionary_sizes.size() << " final dictionary="
              << (result.dictionary_sizes.empty() ? 0 : result.dictionary_sizes.back())
              << (result.converged ? " (converged)" : "") << " -> " << map_out << "\n";
  });

  auto* align_nm = align_cmd->add_subcommand("nm", "unsupervised similarity-signature seed");
  add_tables(align_nm);
  int signature_length = 32;
  align_nm->add_option("--signature-length", signature_length)->capture_default_str();
  align_nm->add_option("--max-iters", max_iters)->capture_default_str();
  align_nm->add_option("--out", map_out)->required();
  align_nm->callback([&] {
    const auto src = io::read_embeddings(source_emb);
    const auto tgt = io::read_embeddings(target_emb);
    align::NmOptions opts;
    opts.signature_length = signature_length;
    opts.self_learning.max_iters = max_iters;
    const auto result = align::nm_align(src, tgt, opts);
    io::write_alignment_map(map_out, result.map);
    std::cout << "iterations=" << result.dictionary_sizes.size() << " final dictionary="
              << (result.dictionary_sizes.empty() ? 0 : result.dictionary_sizes.back()) << " -> "
              << map_out << "\n";
  });

  auto* align_um = align_cmd->add_subcommand("um", "supervised pair regression");
  add_tables(align_um);
  add_cross(align_um);
  align_um->add_option("--ridge", ridge)->capture_default_str();
  align_um->add_option("--out", map_out)->required();
  align_um->callback([&] {
    const auto src = io::read_embeddings(source_emb);
    const auto tgt = io::read_embeddings(target_emb);
    const auto cross = io::read_cross_sessions(cross_path, source_shop, target_shop);
    const auto map = align::pair_regression_align(cross, src, tgt, {.ridge_lambda = ridge});
    io::write_alignment_map(map_out, map);
    std::cout << "fit on " << cross.size() << " cross sessions -> " << map_out << "\n";
  });

  auto* align_am = align_cmd->add_subcommand("am", "semi-supervised activity centroids");
  add_tables(align_am);
  align_am->add_option("--catalog-a", catalog_a_path)->required();
  align_am->add_option("--catalog-b", catalog_b_path)->required();
  align_am->add_option("--n-per-category", n_per_category)->capture_default_str();
  align_am->add_option("--ridge", ridge)->capture_default_str();
  align_am->add_option("--out", map_out)->required();
  align_am->callback([&] {
    const auto src = io::read_embeddings(source_emb);
    const auto tgt = io::read_embeddings(target_emb);
    const auto cat_a = io::read_catalog(catalog_a_path);
    const auto cat_b = io::read_catalog(catalog_b_path);
    const auto map = align::centroid_align(cat_a, cat_b, n_per_category, src, tgt, g.seed,
                                           {.ridge_lambda = ridge});
    io::write_alignment_map(map_out, map);
    std::cout << "centroid map -> " << map_out << "\n";
  });

  auto* align_tm = align_cmd->add_subcommand("tm", "sequence translation model");
  add_tables(align_tm);
  add_cross(align_tm);
  align_tm->add_option("--hidden", tm_cfg.hidden)->capture_default_str();
  align_tm->add_option("--epochs", tm_cfg.epochs)->capture_default_str();
  align_tm->add_option("--learning-rate", tm_cfg.learning_rate)->capture_default_str();
  align_tm->add_option("--decode-steps", tm_cfg.max_decode_steps)->capture_default_str();
  align_tm->add_option("--out", tm_out)->required();
  align_tm->callback([&] {
    const auto src = io::read_embeddings(source_emb);
    const auto tgt = io::read_embeddings(target_emb);
    const auto cross = io::read_cross_sessions(cross_path, source_shop, target_shop);
    tm_cfg.rng_seed = g.seed;
    align::TmTrainStats stats;
    const auto model = align::tm_train(cross, src, tgt, tm_cfg, &stats);
    io::write_tm_model(tm_out, model);
    std::cout << "trained on " << stats.pairs_used << " pairs";
    if (!stats.epoch_mean_loss.empty()) {
      std::cout << " (loss " << std::setprecision(4) << stats.epoch_mean_loss.front() << " -> "
                << stats.epoch_mean_loss.back() << ")";
    }
    std::cout << " -> " << tm_out << "\n";
  });

  // ---- eval ----------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "ranking benchmarks and probes");
  std::string map_path, tm_path, report_out, split_name = "test", out_prefix = "cross";
  std::string pm_sessions, target_catalog_path;
  int k = 10;
  bool exclude_seen = false, use_pm = false;

  auto* eval_nep = eval_cmd->add_subcommand("nep", "within-shop next event prediction");
  eval_nep->add_option("--sessions", sessions_path)->required();
  eval_nep->add_option("--emb", source_emb)->required();
  eval_nep->add_option("--k", k)->capture_default_str();
  eval_nep->add_option("--split", split_name, "train|validation|test|all")
      ->capture_default_str();
  eval_nep->add_flag("--exclude-seen", exclude_seen);
  eval_nep->add_option("--out", report_out, "JSON-lines report");
  eval_nep->callback([&] {
    auto sessions = io::read_sessions(sessions_path);
    if (split_name != "all") sessions = eval::take_split(sessions, parse_split(split_name));
    const auto table = io::read_embeddings(source_emb);
    const auto report =
        eval::nep_within_shop(sessions, table, {.k = k, .exclude_seen = exclude_seen});
    if (!report_out.empty()) io::write_report_jsonl(report_out, report);
    print_report_line("NEP", report);
  });

  auto* eval_cross = eval_cmd->add_subcommand("cross", "cross-shop FIP and AIP");
  add_tables(eval_cross);
  add_cross(eval_cross);
  eval_cross->add_option("--map", map_path, "alignment map file");
  eval_cross->add_option("--tm", tm_path, "translation model file");
  eval_cross->add_option("--popularity-from", pm_sessions,
                         "session file for the PM baseline");
  eval_cross->add_option("--k", k)->capture_default_str();
  eval_cross->add_option("--out-prefix", out_prefix)->capture_default_str();
  eval_cross->callback([&] {
    const auto src = io::read_embeddings(source_emb);
    const auto tgt = io::read_embeddings(target_emb);
    const auto cross = io::read_cross_sessions(cross_path, source_shop, target_shop);
    eval::CrossRanker ranker;
    align::AlignmentMap map;
    align::TranslationModel tm;
    if (!map_path.empty()) {
      map = load_map_checked(map_path);
      ranker = eval::make_map_ranker(map, src, tgt, k);
    } else if (!tm_path.empty()) {
      tm = io::read_tm_model(tm_path);
      ranker = eval::make_tm_ranker(tm, k);
    } else if (!pm_sessions.empty()) {
      const auto corpus_sessions = io::read_sessions(pm_sessions);
      ranker = eval::make_static_ranker(eval::popularity_baseline(corpus_sessions, tgt.vocab));
    } else {
      throw ValidationError("eval cross: give one of --map, --tm or --popularity-from");
    }
    const auto reports = eval::cross_shop_eval(cross, ranker, tgt, k);
    io::write_report_jsonl(out_prefix + "_fip.jsonl", reports.fip);
    io::write_report_jsonl(out_prefix + "_aip.jsonl", reports.aip);
    print_report_line("FIP", reports.fip);
    print_report_line("AIP", reports.aip);
  });

  auto* eval_probe = eval_cmd->add_subcommand("probe", "activity probe accuracy");
  eval_probe->add_option("--emb", source_emb)->required();
  eval_probe->add_option("--catalog", catalog_a_path)->required();
  eval::ProbeConfig probe_cfg;
  double test_fraction = 0.25;
  bool transfer = false;
  eval_probe->add_option("--epochs", probe_cfg.epochs)->capture_default_str();
  eval_probe->add_option("--test-fraction", test_fraction)->capture_default_str();
  eval_probe->add_flag("--transfer", transfer, "train on mapped source, test on target");
  eval_probe->add_option("--map", map_path, "alignment map (transfer mode)");
  eval_probe->add_option("--target-emb", target_emb, "target table (transfer mode)");
  eval_probe->add_option("--target-catalog", target_catalog_path);
  eval_probe->callback([&] {
    probe_cfg.rng_seed = g.seed;
    const auto table = io::read_embeddings(source_emb);
    const auto catalog = io::read_catalog(catalog_a_path);
    const auto labels_of = [](const embed::EmbeddingTable& t, const Catalog& c) {
      std::vector<std::string> labels;
      for (int i = 0; i < t.size(); ++i) {
        const auto row = c.row_of(t.vocab.product(i));
        if (!row) throw ValidationError("product missing from catalog: " + t.vocab.product(i));
        labels.push_back(c.activities[static_cast<std::size_t>(*row)]);
      }
      return labels;
    };
    if (!transfer) {
      const double acc =
          eval::probe_train_eval(table, labels_of(table, catalog), test_fraction, probe_cfg);
      std::cout << "probe accuracy=" << std::setprecision(4) << acc << "\n";
      return;
    }
    if (map_path.empty() || target_emb.empty() || target_catalog_path.empty()) {
      throw ValidationError(
          "eval probe --transfer needs --map, --target-emb and --target-catalog");
    }
    const auto map = load_map_checked(map_path);
    const auto tgt = io::read_embeddings(target_emb);
    const auto tgt_catalog = io::read_catalog(target_catalog_path);
    Mat mapped(table.size(), tgt.dimension());
    for (int i = 0; i < table.size(); ++i) {
      mapped.row(i) = align::translate_point(map, table.u.row(i).transpose()).transpose();
    }
    const double acc = eval::probe_transfer_eval(mapped, labels_of(table, catalog),
                                                 Mat(tgt.u), labels_of(tgt, tgt_catalog),
                                                 probe_cfg);
    std::cout << "transfer probe accuracy=" << std::setprecision(4) << acc << "\n";
  });

  auto* eval_project = eval_cmd->add_subcommand("project", "2-D projection for plotting");
  eval_project->add_option("--emb", source_emb)->required();
  eval_project->add_option("--catalog", catalog_a_path, "adds an activity column");
  eval_project->add_option("--out", report_out)->required();
  eval_project->callback([&] {
    const auto table = io::read_embeddings(source_emb);
    const Mat coords = eval::projection_2d(table);
    Catalog catalog;
    if (!catalog_a_path.empty()) catalog = io::read_catalog(catalog_a_path);
    std::ostringstream out;
    out << std::setprecision(17);
    for (int i = 0; i < table.size(); ++i) {
      out << table.vocab.product(i) << '\t' << coords(i, 0) << '\t' << coords(i, 1);
      if (catalog.size() > 0) {
        const auto row = catalog.row_of(table.vocab.product(i));
        out << '\t' << (row ? catalog.activities[static_cast<std::size_t>(*row)] : "unknown");
      }
      out << '\n';
    }
    io::write_text_file(report_out, out.str());
    std::cout << "wrote " << table.size() << " points -> " << report_out << "\n";
  });

  auto* eval_errors = eval_cmd->add_subcommand("errors", "distance-ranked miss analysis");
  add_tables(eval_errors);
  add_cross(eval_errors);
  eval_errors->add_option("--map", map_path)->required();
  eval_errors->add_option("--target-catalog", target_catalog_path)->required();
  eval_errors->add_option("--k", k)->capture_default_str();
  eval_errors->add_option("--out", report_out);
  eval_errors->callback([&] {
    const auto src = io::read_embeddings(source_emb);
    const auto tgt = io::read_embeddings(target_emb);
    const auto cross = io::read_cross_sessions(cross_path, source_shop, target_shop);
    const auto map = load_map_checked(map_path);
    const auto catalog = io::read_catalog(target_catalog_path);
    std::vector<std::string> labels;
    for (int i = 0; i < tgt.size(); ++i) {
      const auto row = catalog.row_of(tgt.vocab.product(i));
      labels.push_back(row ? catalog.activities[static_cast<std::size_t>(*row)] : "unknown");
    }
    const auto reports =
        eval::cross_shop_eval(cross, eval::make_map_ranker(map, src, tgt, k), tgt, k);
    const auto analysis = eval::error_analysis(reports.fip, tgt, &labels);
    if (!report_out.empty()) {
      std::ostringstream out;
      out << std::setprecision(17);
      for (const auto& m : analysis.misses) {
        out << m.session_id << '\t' << tgt.vocab.product(m.predicted) << '\t'
            << tgt.vocab.product(m.target) << '\t' << m.distance << '\t'
            << (m.activity_match ? 1 : 0) << '\n';
      }
      io::write_text_file(report_out, out.str());
    }
    std::cout << "misses=" << analysis.misses.size() << " activity match overall="
              << std::setprecision(4) << analysis.overall_match_rate
              << " below-median=" << analysis.below_median_match_rate
              << " above-median=" << analysis.above_median_match_rate << "\n";
  });

  // ---- typeahead -----------------------------------------------------
  auto* ta_cmd = app.add_subcommand("typeahead", "conditional query completion");
  std::string queries_path, query_sessions_path, lm_path, queries_train_path;
  typeahead::LmConfig lm_cfg;
  int seed_length = 0, ta_k = 5, top_m = 35;

  auto* ta_train = ta_cmd->add_subcommand("train", "train the conditional character model");
  ta_train->add_option("--queries", queries_path, "query TSV (query, session_id, shop_id)")
      ->required();
  ta_train->add_option("--query-sessions", query_sessions_path, "session file for the queries")
      ->required();
  ta_train->add_option("--emb", target_emb, "target-shop embeddings for intents")->required();
  ta_train->add_option("--hidden", lm_cfg.hidden)->capture_default_str();
  ta_train->add_option("--epochs", lm_cfg.epochs)->capture_default_str();
  ta_train->add_option("--out", lm_path)->required();
  ta_train->callback([&] {
    lm_cfg.rng_seed = g.seed;
    const auto records = io::read_queries(queries_path);
    const auto sessions = io::read_sessions(query_sessions_path);
    const auto items = io::attach_sessions(records, sessions);
    const auto table = io::read_embeddings(target_emb);
    std::vector<std::optional<Vec>> intents;
    intents.reserve(items.size());
    for (const auto& item : items) {
      try {
        intents.emplace_back(embed::session_vector(item.session.products, table));
      } catch (const ValidationError&) {
        intents.emplace_back(std::nullopt);
      }
    }
    typeahead::LmTrainStats stats;
    const auto lm = typeahead::lm_train(items, intents, table.dimension(), lm_cfg, &stats);
    io::write_lm_model(lm_path, lm);
    std::cout << "trained on " << stats.queries_used << " queries";
    if (!stats.epoch_mean_loss.empty()) {
      std::cout << " (loss " << std::setprecision(4) << stats.epoch_mean_loss.front() << " -> "
                << stats.epoch_mean_loss.back() << ")";
    }
    std::cout << " -> " << lm_path << "\n";
  });

  auto* ta_eval = ta_cmd->add_subcommand("eval", "MRR@k against transferred intents");
  ta_eval->add_option("--lm", lm_path, "trained model (omit for the popularity baseline)");
  ta_eval->add_option("--queries", queries_path, "ground-truth cross queries")->required();
  ta_eval->add_option("--queries-train", queries_train_path, "training queries for the pool")
      ->required();
  add_cross(ta_eval);
  ta_eval->add_option("--source-emb", source_emb);
  ta_eval->add_option("--target-emb", target_emb);
  ta_eval->add_option("--map", map_path, "alignment map for intent transfer");
  ta_eval->add_option("--tm", tm_path, "translation model for intent transfer");
  ta_eval->add_option("--seed-length", seed_length, "prefix length SL")->capture_default_str();
  ta_eval->add_option("--k", ta_k)->capture_default_str();
  ta_eval->add_option("--top-m", top_m)->capture_default_str();
  ta_eval->callback([&] {
    const auto pool_items = io::read_queries(queries_train_path);
    std::vector<typeahead::QueryItem> pool_queries;
    pool_queries.reserve(pool_items.size());
    for (const auto& r : pool_items) pool_queries.push_back({r.query, {}, r.shop_id});
    const auto pool = typeahead::popularity_pool(pool_queries, top_m);

    const auto cross = io::read_cross_sessions(cross_path, source_shop, target_shop);
    std::vector<corpus::Session> sources;
    sources.reserve(cross.size());
    for (const auto& cs : cross) sources.push_back(cs.source);
    const auto items = io::attach_sessions(io::read_queries(queries_path), sources);

    typeahead::CondLM lm;
    const bool conditioned = !lm_path.empty();
    if (conditioned) lm = io::read_lm_model(lm_path);

    std::optional<align::AlignmentMap> map;
    std::optional<align::TranslationModel> tm;
    embed::EmbeddingTable src, tgt;
    if (!map_path.empty()) {
      map = load_map_checked(map_path);
      src = io::read_embeddings(source_emb);
    } else if (!tm_path.empty()) {
      tm = io::read_tm_model(tm_path);
      tgt = io::read_embeddings(target_emb);
    }

    std::vector<typeahead::TypeaheadItem> eval_items;
    for (const auto& q : items) {
      typeahead::TypeaheadItem item;
      item.ground_truth = q.query;
      try {
        if (map) {
          item.intent =
              align::translate_point(*map, embed::session_vector(q.session.products, src));
        } else if (tm) {
          std::vector<int> ids;
          for (const auto& p : q.session.products) {
            if (auto id = tm->source_vocab.id_of(p)) ids.push_back(*id);
          }
          const auto decoded = align::tm_greedy_decode(*tm, ids, tm->config.max_decode_steps);
          Vec intent = Vec::Zero(tgt.dimension());
          for (int id : decoded) intent += tm->tgt_embed.row(id).transpose();
          item.intent = intent / static_cast<double>(decoded.size());
        }
      } catch (const ValidationError&) {
        item.intent = std::nullopt;
      }
      eval_items.push_back(std::move(item));
    }
    const auto report = typeahead::typeahead_eval(conditioned ? &lm : nullptr, pool,
                                                  eval_items, seed_length, ta_k);
    std::cout << "MRR@" << ta_k << " (SL=" << seed_length << ")=" << std::setprecision(4)
              << report.mrr << " evaluated=" << report.evaluated
              << " skipped=" << report.skipped << "\n";
  });

  // ---- run / report --------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "execute the full pipeline from a manifest");
  std::string manifest_path;
  std::vector<std::string> stages;
  run_cmd->add_option("--manifest", manifest_path, "key = value run manifest")->required();
  run_cmd->add_option("--stage", stages, "restrict to these stages");
  run_cmd->callback([&] {
    auto manifest = pipeline::Manifest::parse_file(manifest_path);
    if (!manifest.has("seed")) manifest.set("seed", std::to_string(g.seed));
    if (!manifest.has("deterministic")) {
      manifest.set("deterministic", g.deterministic ? "true" : "false");
    }
    const std::string out_dir = manifest.get("out_dir", g.out_dir);
    const auto result = pipeline::run_pipeline(manifest, out_dir, stages);
    for (const auto& s : result.stages) {
      std::cout << "stage " << std::left << std::setw(10) << s.name
                << (s.skipped ? "up to date" : "done") << " (" << s.outputs.size()
                << " files)\n";
    }
    std::cout << "\n" << result.report;
  });

  auto* report_cmd = app.add_subcommand("report", "render the comparison tables");
  report_cmd->add_option("--dir", g.out_dir, "pipeline output directory")
      ->capture_default_str();
  report_cmd->callback([&] { std::cout << pipeline::render_report(g.out_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
