#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "shopalign/io.hpp"
#include "shopalign/pipeline.hpp"
#include "shopalign/synth.hpp"

using namespace shopalign;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("shopalign-test-" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string s(const std::string& rel) const { return (path / rel).string(); }
};

// A manifest small enough for unit tests but exercising every stage.
const char* kTinyManifest = R"(
seed = 7
preset = ci-small
synth.products_a = 40
synth.products_b = 60
synth.sessions_a = 500
synth.sessions_b = 700
synth.cross_train = 260
synth.cross_eval = 200
synth.queries = 220
embed.dim = 12
embed.epochs = 3
embed.min_count = 2
embed.grid = small
align.pca_dim = 8
align.clusters = 10
align.max_iters = 10
align.tm_epochs = 1
align.tm_hidden = 12
typeahead.hidden = 12
typeahead.epochs = 1
typeahead.eval_items = 60
)";

}  // namespace

TEST_CASE("manifest parsing") {
  const auto m = pipeline::Manifest::parse_string(
      "# comment\n key = value \nseed= 9\nflag = true\nrate = 0.5\n\n");
  CHECK(m.get("key", "") == "value");
  CHECK(m.get_int("seed", 0) == 9);
  CHECK(m.get_bool("flag", false));
  CHECK(m.get_double("rate", 0.0) == doctest::Approx(0.5));
  CHECK(m.get("missing", "fallback") == "fallback");
  CHECK_THROWS_AS(pipeline::Manifest::parse_string("not a pair\n"), ValidationError);
  CHECK_THROWS_AS(m.get_int("key", 0), ValidationError);
}

TEST_CASE("manifest fingerprints are order-insensitive and value-sensitive") {
  const auto a = pipeline::Manifest::parse_string("x = 1\ny = 2\n");
  const auto b = pipeline::Manifest::parse_string("y = 2\nx = 1\n");
  const auto c = pipeline::Manifest::parse_string("x = 1\ny = 3\n");
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("file format round trips") {
  TempDir tmp("io");
  Rng rng(3);

  SUBCASE("events") {
    std::vector<corpus::Event> events{{"s1", "p1", 0, corpus::EventType::View, "A"},
                                      {"s1", "p2", 1500, corpus::EventType::Purchase, "A"}};
    io::write_events(tmp.s("events.tsv"), events);
    const auto back = io::read_events(tmp.s("events.tsv"));
    REQUIRE(back.events.size() == 2);
    CHECK(back.events[1].type == corpus::EventType::Purchase);
    CHECK(back.events[1].timestamp_ms == 1500);
  }

  SUBCASE("sessions") {
    std::vector<corpus::Session> sessions{oracle::make_session("s1", {"a", "b"}),
                                          oracle::make_session("s2", {"c", "d", "e"}, "B")};
    io::write_sessions(tmp.s("sessions.tsv"), sessions);
    const auto back = io::read_sessions(tmp.s("sessions.tsv"));
    REQUIRE(back.size() == 2);
    CHECK(back[1].shop_id == "B");
    CHECK(back[1].products == std::vector<std::string>{"c", "d", "e"});
  }

  SUBCASE("catalog") {
    Catalog cat;
    cat.ids = {"p1", "p2"};
    cat.activities = {"tennis", "golf"};
    cat.features = oracle::random_rows(2, 5, rng);
    cat.rebuild_index();
    io::write_catalog(tmp.s("catalog.tsv"), cat);
    const auto back = io::read_catalog(tmp.s("catalog.tsv"));
    CHECK(back.activities[1] == "golf");
    CHECK((back.features - cat.features).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(back.row_of("p2") == 1);
  }

  SUBCASE("embeddings round trip bit-exactly") {
    auto table = oracle::table_from_rows(oracle::random_rows(6, 4, rng));
    io::write_embeddings(tmp.s("emb.vec"), table);
    const auto back = io::read_embeddings(tmp.s("emb.vec"));
    CHECK(back.size() == 6);
    CHECK(Mat(back.u) == Mat(table.u));
    CHECK(back.vocab.product(3) == "p3");
  }

  SUBCASE("alignment maps with and without bias") {
    align::AlignmentMap map;
    map.w = oracle::random_rows(3, 3, rng);
    map.method = align::Method::UM;
    map.bias = oracle::random_rows(1, 3, rng).row(0).transpose();
    io::write_alignment_map(tmp.s("map.txt"), map);
    const auto back = io::read_alignment_map(tmp.s("map.txt"));
    CHECK(back.method == align::Method::UM);
    CHECK((back.w - map.w).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE(back.bias);
    CHECK((*back.bias - *map.bias).lpNorm<Eigen::Infinity>() == 0.0);

    map.bias.reset();
    map.method = align::Method::IM;
    io::write_alignment_map(tmp.s("map2.txt"), map);
    CHECK(!io::read_alignment_map(tmp.s("map2.txt")).bias);
  }

  SUBCASE("seed dictionaries") {
    align::SeedDictionary seed;
    seed.pairs.push_back({"a", "b", 1.0});
    seed.pairs.push_back({"c", "d", 0.25});
    io::write_seed_dictionary(tmp.s("seed.tsv"), seed);
    const auto back = io::read_seed_dictionary(tmp.s("seed.tsv"));
    REQUIRE(back.pairs.size() == 2);
    CHECK(back.pairs[1].weight == 0.25);
  }

  SUBCASE("cross sessions") {
    std::vector<corpus::CrossSession> cross;
    corpus::CrossSession cs;
    cs.source = oracle::make_session("x1", {"a", "b"}, "A");
    cs.target = oracle::make_session("x1", {"c"}, "B");
    cross.push_back(cs);
    io::write_cross_sessions(tmp.s("cross.tsv"), cross);
    const auto back = io::read_cross_sessions(tmp.s("cross.tsv"), "A", "B");
    REQUIRE(back.size() == 1);
    CHECK(back[0].source.products == std::vector<std::string>{"a", "b"});
    CHECK(back[0].target.products == std::vector<std::string>{"c"});
  }

  SUBCASE("queries join back to their sessions") {
    std::vector<typeahead::QueryItem> items{
        {"tennis bag", oracle::make_session("q1", {"a", "b"}, "B"), "B"}};
    io::write_queries(tmp.s("queries.tsv"), items);
    io::write_sessions(tmp.s("qsessions.tsv"), {items[0].session});
    const auto records = io::read_queries(tmp.s("queries.tsv"));
    const auto sessions = io::read_sessions(tmp.s("qsessions.tsv"));
    const auto joined = io::attach_sessions(records, sessions);
    REQUIRE(joined.size() == 1);
    CHECK(joined[0].query == "tennis bag");
    CHECK(joined[0].session.products == std::vector<std::string>{"a", "b"});
  }

  SUBCASE("tm model json") {
    auto source = oracle::table_from_rows(oracle::random_rows(3, 2, rng, 0.5), "s");
    auto target = oracle::table_from_rows(oracle::random_rows(4, 2, rng, 0.5), "t");
    std::vector<corpus::CrossSession> cross;
    corpus::CrossSession cs;
    cs.source = oracle::make_session("x", {"s0"}, "A");
    cs.target = oracle::make_session("x", {"t1"}, "B");
    cross.push_back(cs);
    align::TmConfig cfg;
    cfg.hidden = 6;
    cfg.epochs = 1;
    const auto model = align::tm_train(cross, source, target, cfg);
    io::write_tm_model(tmp.s("tm.json"), model);
    const auto back = io::read_tm_model(tmp.s("tm.json"));
    CHECK(back.w_out == model.w_out);
    CHECK(back.tgt_embed == model.tgt_embed);
    const auto d1 = align::tm_greedy_decode(model, {0}, 2);
    const auto d2 = align::tm_greedy_decode(back, {0}, 2);
    CHECK(d1 == d2);
  }
}

TEST_CASE("pipeline runs end to end, resumes, and reruns deterministically") {
  TempDir out1("pipe1");
  const auto manifest = pipeline::Manifest::parse_string(kTinyManifest);

  const auto first = pipeline::run_pipeline(manifest, out1.s(""));
  REQUIRE(first.stages.size() == 6);
  for (const auto& s : first.stages) CHECK(!s.skipped);
  CHECK(fs::exists(out1.path / "synth/events_a.tsv"));
  CHECK(fs::exists(out1.path / "embed/embeddings_b.vec"));
  CHECK(fs::exists(out1.path / "embed/grid_a.json"));
  CHECK(fs::exists(out1.path / "embed/embeddings_a_worst.vec"));
  CHECK(fs::exists(out1.path / "align/map_um.txt"));
  CHECK(fs::exists(out1.path / "eval/summary_eval.json"));
  CHECK(fs::exists(out1.path / "typeahead/summary_typeahead.json"));
  CHECK(fs::exists(out1.path / "report.txt"));
  CHECK(first.report.find("cross-shop NDCG@10") != std::string::npos);

  SUBCASE("a second run skips every stage") {
    const auto second = pipeline::run_pipeline(manifest, out1.s(""));
    for (const auto& s : second.stages) CHECK(s.skipped);
  }

  SUBCASE("deleting one stage's outputs regenerates only that stage") {
    fs::remove(out1.path / "eval/summary_eval.json");
    const auto rerun = pipeline::run_pipeline(manifest, out1.s(""));
    for (const auto& s : rerun.stages) {
      if (s.name == "eval") {
        CHECK(!s.skipped);
      } else {
        CHECK(s.skipped);
      }
    }
  }

  SUBCASE("a fresh run reproduces identical checksums") {
    TempDir out2("pipe2");
    pipeline::run_pipeline(manifest, out2.s(""));
    for (const auto& stage : first.stages) {
      for (const auto& rel : stage.outputs) {
        CHECK(io::file_checksum(out1.s(rel)) == io::file_checksum(out2.s(rel)));
      }
    }
  }

  SUBCASE("stage subsets validate their names") {
    CHECK_THROWS_AS(pipeline::run_pipeline(manifest, out1.s(""), {"nonsense"}),
                    ValidationError);
  }
}

TEST_CASE("report renders n/a for missing metrics") {
  TempDir out("report");
  const auto text = pipeline::render_report(out.s(""));
  CHECK(text.find("shopalign run report") != std::string::npos);

  // With only a typeahead summary present, absent models read n/a.
  fs::create_directories(out.path / "typeahead");
  io::write_text_file(out.s("typeahead/summary_typeahead.json"),
                      R"({"pm": {"sl0": 0.1, "sl1": 0.2}})");
  const auto partial = pipeline::render_report(out.s(""));
  CHECK(partial.find("type-ahead MRR@5") != std::string::npos);
  CHECK(partial.find("n/a") != std::string::npos);
}
