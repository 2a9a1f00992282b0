#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "shopalign/common.hpp"

namespace shopalign::corpus {

enum class EventType { View, Click, Add, Purchase };

std::optional<EventType> parse_event_type(std::string_view s);
std::string_view event_type_name(EventType t);

struct Event {
  std::string session_id;
  std::string product_id;
  std::int64_t timestamp_ms = 0;
  EventType type = EventType::View;
  std::string shop_id;
};

/// One shopper session: product interactions ordered by timestamp,
/// ties broken by input order.
struct Session {
  std::string session_id;
  std::string shop_id;
  std::vector<std::string> products;

  std::size_t size() const { return products.size(); }
};

struct ParseOptions {
  // Fraction of malformed lines tolerated before parsing fails.
  double malformed_tolerance = 0.0;
};

struct ParseResult {
  std::vector<Event> events;
  std::size_t malformed_count = 0;
  std::size_t line_count = 0;
};

/// Reads line-delimited TSV events:
///   session_id \t product_id \t timestamp_ms \t event_type \t shop_id
/// Malformed lines are counted, never silently dropped; exceeding the
/// tolerance raises ValidationError, an unreadable stream raises IoError.
ParseResult parse_events(std::istream& in, const ParseOptions& opts = {});

struct SessionizeOptions {
  // Sessions longer than this are treated as bot traffic and dropped.
  std::size_t bot_event_threshold = 100;
  // Sessions whose median inter-event gap is below this are dropped too.
  std::int64_t bot_min_median_gap_ms = 200;
  // Minimum events per session kept for training corpora.
  std::size_t min_session_length = 2;
};

struct SessionizeResult {
  std::vector<Session> sessions;
  std::size_t bot_filtered = 0;
  std::size_t short_filtered = 0;
};

/// Groups events by (shop_id, session_id), orders them by timestamp with
/// input order as tie-break, and applies the bot and minimum-length filters.
SessionizeResult sessionize(const std::vector<Event>& events,
                            const SessionizeOptions& opts = {});

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> products, std::vector<std::int64_t> counts);

  int size() const { return static_cast<int>(products_.size()); }
  const std::string& product(int id) const { return products_[static_cast<std::size_t>(id)]; }
  std::int64_t count(int id) const { return counts_[static_cast<std::size_t>(id)]; }
  std::optional<int> id_of(const std::string& product) const;
  const std::vector<std::string>& products() const { return products_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }

 private:
  std::vector<std::string> products_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, int> index_;
};

/// Builds the training vocabulary: products with total occurrence count
/// >= min_count, ordered by descending count (ties by product id).
Vocabulary build_vocab(const std::vector<Session>& sessions, int min_count);

/// Drops out-of-vocabulary products from each session; sessions falling
/// under min_length afterwards are removed.
std::vector<Session> restrict_to_vocab(const std::vector<Session>& sessions,
                                       const Vocabulary& vocab,
                                       std::size_t min_length = 2);

/// One shopper crossing from a source shop to a target shop: the two halves
/// of the journey, in order.
struct CrossSession {
  Session source;
  Session target;
};

struct CorpusStats {
  std::size_t session_count = 0;
  std::size_t event_count = 0;
  std::size_t sku_count = 0;
  // Nearest-rank 25/50/75 percentiles of session length.
  std::array<std::size_t, 3> length_percentiles{0, 0, 0};
};

CorpusStats stats(const std::vector<Session>& sessions);

}  // namespace shopalign::corpus
