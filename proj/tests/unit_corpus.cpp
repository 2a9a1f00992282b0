#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "shopalign/corpus.hpp"

using namespace shopalign;
using namespace shopalign::corpus;

namespace {

std::string line(const std::string& sid, const std::string& pid, std::int64_t ts,
                 const std::string& type = "view", const std::string& shop = "A") {
  return sid + "\t" + pid + "\t" + std::to_string(ts) + "\t" + type + "\t" + shop + "\n";
}

}  // namespace

TEST_CASE("parse_events on an empty stream") {
  std::istringstream in("");
  const auto res = parse_events(in);
  CHECK(res.events.empty());
  CHECK(res.malformed_count == 0);
}

TEST_CASE("parse_events preserves input order") {
  std::istringstream in(line("s1", "p1", 10) + line("s1", "p2", 5) + line("s2", "p3", 1));
  const auto res = parse_events(in);
  REQUIRE(res.events.size() == 3);
  CHECK(res.events[0].product_id == "p1");
  CHECK(res.events[1].product_id == "p2");
  CHECK(res.events[2].product_id == "p3");
  CHECK(res.events[1].timestamp_ms == 5);
  CHECK(res.events[0].type == EventType::View);
}

TEST_CASE("parse_events counts malformed lines under tolerance") {
  std::istringstream in(line("s1", "p1", 10) + "not-an-event\n");
  const auto res = parse_events(in, {.malformed_tolerance = 0.5});
  CHECK(res.events.size() == 1);
  CHECK(res.malformed_count == 1);
}

TEST_CASE("parse_events rejects malformed lines above tolerance") {
  SUBCASE("default zero tolerance") {
    std::istringstream in(line("s1", "p1", 10) + "garbage\n");
    CHECK_THROWS_AS(parse_events(in), ValidationError);
  }
  SUBCASE("negative timestamps are malformed") {
    std::istringstream in(line("s1", "p1", -5));
    CHECK_THROWS_AS(parse_events(in), ValidationError);
  }
  SUBCASE("unknown event type is malformed") {
    std::istringstream in("s1\tp1\t10\thover\tA\n");
    CHECK_THROWS_AS(parse_events(in), ValidationError);
  }
}

TEST_CASE("parse_events raises IoError on an unreadable stream") {
  std::ifstream bad("/nonexistent/϶/events.tsv");
  CHECK_THROWS_AS(parse_events(bad), IoError);
}

TEST_CASE("sessionize groups by shop and session id") {
  std::istringstream in(line("s1", "a", 0) + line("s2", "x", 0) + line("s1", "b", 1000) +
                        line("s2", "y", 1000));
  const auto events = parse_events(in).events;
  const auto res = sessionize(events);
  REQUIRE(res.sessions.size() == 2);
  CHECK(res.sessions[0].session_id == "s1");
  CHECK(res.sessions[0].products == std::vector<std::string>{"a", "b"});
  CHECK(res.sessions[1].products == std::vector<std::string>{"x", "y"});
}

TEST_CASE("sessionize orders by timestamp with input order as tie-break") {
  std::istringstream in(line("s1", "late", 5000) + line("s1", "first", 0) +
                        line("s1", "tie1", 1000) + line("s1", "tie2", 1000));
  const auto res = sessionize(parse_events(in).events);
  REQUIRE(res.sessions.size() == 1);
  CHECK(res.sessions[0].products ==
        std::vector<std::string>{"first", "tie1", "tie2", "late"});
}

TEST_CASE("sessionize drops single-event sessions from the training corpus") {
  std::istringstream in(line("s1", "a", 0) + line("s2", "x", 0) + line("s2", "y", 1000));
  const auto res = sessionize(parse_events(in).events);
  CHECK(res.sessions.size() == 1);
  CHECK(res.short_filtered == 1);
}

TEST_CASE("sessionize filters bot-like sessions") {
  SUBCASE("by event count") {
    std::vector<Event> events;
    for (int i = 0; i < 200; ++i) {
      events.push_back({"bot", "p" + std::to_string(i), i * 1000, EventType::View, "A"});
    }
    events.push_back({"human", "a", 0, EventType::View, "A"});
    events.push_back({"human", "b", 1000, EventType::View, "A"});
    SessionizeOptions opts;
    opts.bot_event_threshold = 100;
    const auto res = sessionize(events, opts);
    CHECK(res.sessions.size() == 1);
    CHECK(res.sessions[0].session_id == "human");
    CHECK(res.bot_filtered == 1);
  }
  SUBCASE("by median inter-event gap") {
    std::vector<Event> events;
    for (int i = 0; i < 10; ++i) {
      events.push_back({"fast", "p", i * 50, EventType::View, "A"});  // 50ms gaps
    }
    const auto res = sessionize(events);
    CHECK(res.sessions.empty());
    CHECK(res.bot_filtered == 1);
  }
}

TEST_CASE("build_vocab applies the count threshold") {
  std::vector<Session> sessions{
      oracle::make_session("s1", {"a", "a", "a", "b"}),
      oracle::make_session("s2", {"a", "a"}),
  };
  SUBCASE("counts {a:5, b:1} with min_count 2") {
    const auto vocab = build_vocab(sessions, 2);
    CHECK(vocab.size() == 1);
    CHECK(vocab.product(0) == "a");
  }
  SUBCASE("min_count 1 keeps everything") {
    const auto vocab = build_vocab(sessions, 1);
    CHECK(vocab.size() == 2);
  }
}

TEST_CASE("build_vocab keeps exactly the products at or above min_count") {
  // counts {a:3, b:3, c:2}
  std::vector<Session> sessions{oracle::make_session("s1", {"a", "b", "c"}),
                                oracle::make_session("s2", {"a", "b", "c"}),
                                oracle::make_session("s3", {"a", "b"})};
  const auto vocab = build_vocab(sessions, 3);
  REQUIRE(vocab.size() == 2);
  CHECK(vocab.id_of("a").has_value());
  CHECK(vocab.id_of("b").has_value());
  CHECK(!vocab.id_of("c").has_value());
}

TEST_CASE("build_vocab fails on an empty result") {
  std::vector<Session> sessions{oracle::make_session("s1", {"a", "b"})};
  CHECK_THROWS_AS(build_vocab(sessions, 100), ValidationError);
}

TEST_CASE("raising min_count never adds a product") {
  Rng rng(7);
  std::vector<Session> sessions;
  for (int s = 0; s < 40; ++s) {
    std::vector<std::string> products;
    const int len = 2 + static_cast<int>(rng.index(6));
    for (int i = 0; i < len; ++i) {
      products.push_back("p" + std::to_string(rng.index(12)));
    }
    sessions.push_back(oracle::make_session("s" + std::to_string(s), products));
  }
  std::set<std::string> previous;
  for (int i = 0; i < 12; ++i) previous.insert("p" + std::to_string(i));
  for (int mc = 1; mc <= 12; ++mc) {
    std::set<std::string> current;
    try {
      const auto vocab = build_vocab(sessions, mc);
      current.insert(vocab.products().begin(), vocab.products().end());
    } catch (const ValidationError&) {
      current.clear();
    }
    for (const auto& p : current) CHECK(previous.count(p) == 1);
    previous = current;
  }
}

TEST_CASE("restrict_to_vocab drops out-of-vocabulary products") {
  std::vector<Session> sessions{oracle::make_session("s1", {"a", "zz", "b"}),
                                oracle::make_session("s2", {"zz", "a"})};
  Vocabulary vocab({"a", "b"}, {2, 1});
  const auto restricted = restrict_to_vocab(sessions, vocab);
  REQUIRE(restricted.size() == 1);
  CHECK(restricted[0].products == std::vector<std::string>{"a", "b"});
}

TEST_CASE("stats computes nearest-rank percentiles") {
  SUBCASE("lengths 3, 5, 7") {
    std::vector<Session> sessions{
        oracle::make_session("s1", {"a", "b", "c"}),
        oracle::make_session("s2", {"a", "b", "c", "d", "e"}),
        oracle::make_session("s3", {"a", "b", "c", "d", "e", "f", "g"})};
    const auto cs = stats(sessions);
    CHECK(cs.length_percentiles == std::array<std::size_t, 3>{3, 5, 7});
    CHECK(cs.session_count == 3);
    CHECK(cs.event_count == 15);
    CHECK(cs.sku_count == 7);
  }
  SUBCASE("degenerate single session") {
    std::vector<Session> sessions{oracle::make_session("s1", {"a", "b", "c", "d"})};
    const auto cs = stats(sessions);
    CHECK(cs.length_percentiles == std::array<std::size_t, 3>{4, 4, 4});
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(stats({}), ValidationError);
  }
}

TEST_CASE("sessionize of parse_events is deterministic and conserves events") {
  std::string data;
  Rng rng(3);
  for (int i = 0; i < 60; ++i) {
    data += line("s" + std::to_string(rng.index(9)), "p" + std::to_string(rng.index(5)),
                 static_cast<std::int64_t>(rng.index(5)) * 1000);
  }
  std::istringstream in1(data), in2(data);
  const auto parsed1 = parse_events(in1);
  const auto parsed2 = parse_events(in2);
  const auto r1 = sessionize(parsed1.events);
  const auto r2 = sessionize(parsed2.events);
  REQUIRE(r1.sessions.size() == r2.sessions.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < r1.sessions.size(); ++i) {
    CHECK(r1.sessions[i].session_id == r2.sessions[i].session_id);
    CHECK(r1.sessions[i].products == r2.sessions[i].products);
    total += r1.sessions[i].size();
  }
  CHECK(total <= parsed1.events.size());
}
