#include "shopalign/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <numeric>

namespace shopalign::corpus {

std::optional<EventType> parse_event_type(std::string_view s) {
  if (s == "view") return EventType::View;
  if (s == "click") return EventType::Click;
  if (s == "add") return EventType::Add;
  if (s == "purchase") return EventType::Purchase;
  return std::nullopt;
}

std::string_view event_type_name(EventType t) {
  switch (t) {
    case EventType::View: return "view";
    case EventType::Click: return "click";
    case EventType::Add: return "add";
    case EventType::Purchase: return "purchase";
  }
  return "view";
}

namespace {

std::optional<Event> parse_line(const std::string& line) {
  auto fields = split(line, '\t');
  if (fields.size() != 5) return std::nullopt;
  Event e;
  e.session_id = fields[0];
  e.product_id = fields[1];
  if (e.session_id.empty() || e.product_id.empty()) return std::nullopt;
  const auto* begin = fields[2].data();
  const auto* end = begin + fields[2].size();
  auto [ptr, ec] = std::from_chars(begin, end, e.timestamp_ms);
  if (ec != std::errc() || ptr != end || e.timestamp_ms < 0) return std::nullopt;
  auto type = parse_event_type(fields[3]);
  if (!type) return std::nullopt;
  e.type = *type;
  e.shop_id = fields[4];
  if (e.shop_id.empty()) return std::nullopt;
  return e;
}

}  // namespace

ParseResult parse_events(std::istream& in, const ParseOptions& opts) {
  if (!in.good()) throw IoError("parse_events: unreadable stream");
  ParseResult res;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++res.line_count;
    if (auto e = parse_line(line)) {
      res.events.push_back(std::move(*e));
    } else {
      ++res.malformed_count;
    }
  }
  if (in.bad()) throw IoError("parse_events: read failure");
  if (res.line_count > 0) {
    const double frac = static_cast<double>(res.malformed_count) / res.line_count;
    if (frac > opts.malformed_tolerance) {
      throw ValidationError("parse_events: " + std::to_string(res.malformed_count) + " of " +
                            std::to_string(res.line_count) +
                            " lines malformed, above tolerance " +
                            std::to_string(opts.malformed_tolerance));
    }
  }
  return res;
}

namespace {

bool looks_like_bot(const std::vector<std::pair<std::int64_t, std::string>>& events,
                    const SessionizeOptions& opts) {
  if (events.size() > opts.bot_event_threshold) return true;
  if (events.size() < 2) return false;
  std::vector<std::int64_t> gaps;
  gaps.reserve(events.size() - 1);
  for (std::size_t i = 1; i < events.size(); ++i) {
    gaps.push_back(events[i].first - events[i - 1].first);
  }
  std::sort(gaps.begin(), gaps.end());
  const std::int64_t median = gaps[(gaps.size() - 1) / 2];
  return median < opts.bot_min_median_gap_ms;
}

}  // namespace

SessionizeResult sessionize(const std::vector<Event>& events, const SessionizeOptions& opts) {
  // map keeps output deterministic: sessions ordered by (shop, session id).
  std::map<std::pair<std::string, std::string>,
           std::vector<std::pair<std::int64_t, std::string>>> groups;
  for (const auto& e : events) {
    groups[{e.shop_id, e.session_id}].emplace_back(e.timestamp_ms, e.product_id);
  }

  SessionizeResult res;
  for (auto& [key, evs] : groups) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (looks_like_bot(evs, opts)) {
      ++res.bot_filtered;
      continue;
    }
    if (evs.size() < opts.min_session_length) {
      ++res.short_filtered;
      continue;
    }
    Session s;
    s.shop_id = key.first;
    s.session_id = key.second;
    s.products.reserve(evs.size());
    for (auto& [ts, pid] : evs) s.products.push_back(std::move(pid));
    res.sessions.push_back(std::move(s));
  }
  return res;
}

Vocabulary::Vocabulary(std::vector<std::string> products, std::vector<std::int64_t> counts)
    : products_(std::move(products)), counts_(std::move(counts)) {
  index_.reserve(products_.size());
  for (std::size_t i = 0; i < products_.size(); ++i) {
    index_.emplace(products_[i], static_cast<int>(i));
  }
}

std::optional<int> Vocabulary::id_of(const std::string& product) const {
  auto it = index_.find(product);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocab(const std::vector<Session>& sessions, int min_count) {
  if (min_count < 1) throw ValidationError("build_vocab: min_count must be >= 1");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& s : sessions) {
    for (const auto& p : s.products) ++counts[p];
  }
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [pid, c] : counts) {
    if (c >= min_count) kept.emplace_back(pid, c);
  }
  if (kept.empty()) {
    throw ValidationError("build_vocab: no product reaches min_count=" +
                          std::to_string(min_count));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> products;
  std::vector<std::int64_t> cs;
  products.reserve(kept.size());
  cs.reserve(kept.size());
  for (auto& [pid, c] : kept) {
    products.push_back(std::move(pid));
    cs.push_back(c);
  }
  return Vocabulary(std::move(products), std::move(cs));
}

std::vector<Session> restrict_to_vocab(const std::vector<Session>& sessions,
                                       const Vocabulary& vocab, std::size_t min_length) {
  std::vector<Session> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) {
    Session kept;
    kept.session_id = s.session_id;
    kept.shop_id = s.shop_id;
    for (const auto& p : s.products) {
      if (vocab.id_of(p)) kept.products.push_back(p);
    }
    if (kept.products.size() >= min_length) out.push_back(std::move(kept));
  }
  return out;
}

CorpusStats stats(const std::vector<Session>& sessions) {
  if (sessions.empty()) throw ValidationError("stats: empty session list");
  CorpusStats cs;
  cs.session_count = sessions.size();
  std::vector<std::size_t> lengths;
  lengths.reserve(sessions.size());
  std::unordered_map<std::string, bool> skus;
  for (const auto& s : sessions) {
    lengths.push_back(s.size());
    cs.event_count += s.size();
    for (const auto& p : s.products) skus[p] = true;
  }
  cs.sku_count = skus.size();
  std::sort(lengths.begin(), lengths.end());
  const auto nearest_rank = [&](double pct) {
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(pct / 100.0 * static_cast<double>(lengths.size())));
    if (rank < 1) rank = 1;
    return lengths[rank - 1];
  };
  cs.length_percentiles = {nearest_rank(25), nearest_rank(50), nearest_rank(75)};
  return cs;
}

}  // namespace shopalign::corpus
