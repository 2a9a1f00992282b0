#include "shopalign/io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

namespace shopalign::io {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

// Round-trippable double formatting.
std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw IoError("trailing characters in number: " + s);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed number: " + s);
  }
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return Mat(0, 0);
  const auto cols = j.at(0).size();
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j.at(i).at(c).get<double>();
    }
  }
  return m;
}

json vec_to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vec vec_from_json(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

json gru_to_json(const rnn::GruParams& p) {
  return json{{"wz", mat_to_json(p.wz)}, {"uz", mat_to_json(p.uz)},
              {"wr", mat_to_json(p.wr)}, {"ur", mat_to_json(p.ur)},
              {"wh", mat_to_json(p.wh)}, {"uh", mat_to_json(p.uh)},
              {"bz", vec_to_json(p.bz)}, {"br", vec_to_json(p.br)},
              {"bh", vec_to_json(p.bh)}};
}

rnn::GruParams gru_from_json(const json& j) {
  rnn::GruParams p;
  p.wz = mat_from_json(j.at("wz"));
  p.uz = mat_from_json(j.at("uz"));
  p.wr = mat_from_json(j.at("wr"));
  p.ur = mat_from_json(j.at("ur"));
  p.wh = mat_from_json(j.at("wh"));
  p.uh = mat_from_json(j.at("uh"));
  p.bz = vec_from_json(j.at("bz"));
  p.br = vec_from_json(j.at("br"));
  p.bh = vec_from_json(j.at("bh"));
  return p;
}

json vocab_to_json(const corpus::Vocabulary& v) {
  return json{{"products", v.products()}, {"counts", v.counts()}};
}

corpus::Vocabulary vocab_from_json(const json& j) {
  return corpus::Vocabulary(j.at("products").get<std::vector<std::string>>(),
                            j.at("counts").get<std::vector<std::int64_t>>());
}

}  // namespace

void write_events(const std::string& path, const std::vector<corpus::Event>& events) {
  auto out = open_out(path);
  for (const auto& e : events) {
    out << e.session_id << '\t' << e.product_id << '\t' << e.timestamp_ms << '\t'
        << corpus::event_type_name(e.type) << '\t' << e.shop_id << '\n';
  }
}

corpus::ParseResult read_events(const std::string& path, const corpus::ParseOptions& opts) {
  auto in = open_in(path);
  return corpus::parse_events(in, opts);
}

void write_sessions(const std::string& path, const std::vector<corpus::Session>& sessions) {
  auto out = open_out(path);
  for (const auto& s : sessions) {
    out << s.session_id << '\t' << s.shop_id << '\t';
    for (std::size_t i = 0; i < s.products.size(); ++i) {
      if (i) out << ' ';
      out << s.products[i];
    }
    out << '\n';
  }
}

std::vector<corpus::Session> read_sessions(const std::string& path) {
  auto in = open_in(path);
  std::vector<corpus::Session> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) throw IoError("malformed session line in " + path);
    corpus::Session s;
    s.session_id = fields[0];
    s.shop_id = fields[1];
    for (auto& p : split(fields[2], ' ')) {
      if (!p.empty()) s.products.push_back(std::move(p));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_catalog(const std::string& path, const Catalog& catalog) {
  auto out = open_out(path);
  for (int i = 0; i < catalog.size(); ++i) {
    out << catalog.ids[static_cast<std::size_t>(i)] << '\t'
        << catalog.activities[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < catalog.features.cols(); ++j) {
      out << '\t' << fmt(catalog.features(i, j));
    }
    out << '\n';
  }
}

Catalog read_catalog(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  Catalog cat;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 3) throw IoError("malformed catalog line in " + path);
    cat.ids.push_back(fields[0]);
    cat.activities.push_back(fields[1]);
    std::vector<double> feat;
    for (std::size_t i = 2; i < fields.size(); ++i) feat.push_back(parse_double(fields[i]));
    if (!rows.empty() && rows.front().size() != feat.size()) {
      throw ValidationError("catalog feature vectors must share one length: " + path);
    }
    rows.push_back(std::move(feat));
  }
  cat.features = Mat(static_cast<Eigen::Index>(rows.size()),
                     rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      cat.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  cat.rebuild_index();
  return cat;
}

void write_embeddings(const std::string& path, const embed::EmbeddingTable& table) {
  auto out = open_out(path);
  out << table.size() << ' ' << table.dimension() << '\n';
  for (int i = 0; i < table.size(); ++i) {
    out << table.vocab.product(i);
    for (int j = 0; j < table.dimension(); ++j) out << ' ' << fmt(table.u(i, j));
    out << '\n';
  }
}

embed::EmbeddingTable read_embeddings(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty embedding file: " + path);
  std::istringstream header(line);
  int n = 0, d = 0;
  if (!(header >> n >> d) || n < 1 || d < 1) {
    throw IoError("malformed embedding header in " + path);
  }
  embed::EmbeddingTable table;
  table.u = MatRM(n, d);
  std::vector<std::string> products;
  products.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw IoError("truncated embedding file: " + path);
    std::istringstream row(line);
    std::string pid;
    row >> pid;
    products.push_back(pid);
    for (int j = 0; j < d; ++j) {
      double v = 0;
      if (!(row >> v)) throw IoError("truncated embedding row in " + path);
      table.u(i, j) = v;
    }
  }
  table.vocab = corpus::Vocabulary(std::move(products),
                                   std::vector<std::int64_t>(static_cast<std::size_t>(n), 0));
  table.v = MatRM::Zero(n, d);
  return table;
}

void write_alignment_map(const std::string& path, const align::AlignmentMap& map) {
  auto out = open_out(path);
  out << map.w.cols() << ' ' << map.w.rows() << ' ' << align::method_name(map.method) << '\n';
  for (Eigen::Index i = 0; i < map.w.rows(); ++i) {
    for (Eigen::Index j = 0; j < map.w.cols(); ++j) {
      if (j) out << ' ';
      out << fmt(map.w(i, j));
    }
    out << '\n';
  }
  if (map.bias) {
    out << "bias";
    for (Eigen::Index i = 0; i < map.bias->size(); ++i) out << ' ' << fmt((*map.bias)(i));
    out << '\n';
  }
}

align::AlignmentMap read_alignment_map(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty alignment map: " + path);
  std::istringstream header(line);
  int d_source = 0, d_target = 0;
  std::string method;
  if (!(header >> d_source >> d_target >> method) || d_source < 1 || d_target < 1) {
    throw IoError("malformed alignment header in " + path);
  }
  align::AlignmentMap map;
  const auto parsed = align::parse_method(method);
  if (!parsed) throw IoError("unknown alignment method '" + method + "' in " + path);
  map.method = *parsed;
  map.w = Mat(d_target, d_source);
  for (int i = 0; i < d_target; ++i) {
    if (!std::getline(in, line)) throw IoError("truncated alignment map: " + path);
    std::istringstream row(line);
    for (int j = 0; j < d_source; ++j) {
      if (!(row >> map.w(i, j))) throw IoError("truncated alignment row: " + path);
    }
  }
  if (std::getline(in, line) && !line.empty()) {
    std::istringstream row(line);
    std::string tag;
    row >> tag;
    if (tag != "bias") throw IoError("unexpected trailer in alignment map: " + path);
    Vec bias(d_target);
    for (int i = 0; i < d_target; ++i) {
      if (!(row >> bias(i))) throw IoError("truncated bias line: " + path);
    }
    map.bias = std::move(bias);
  }
  return map;
}

void write_seed_dictionary(const std::string& path, const align::SeedDictionary& seed) {
  auto out = open_out(path);
  for (const auto& p : seed.pairs) {
    out << p.source << '\t' << p.target << '\t' << fmt(p.weight) << '\n';
  }
}

align::SeedDictionary read_seed_dictionary(const std::string& path) {
  auto in = open_in(path);
  align::SeedDictionary seed;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) throw IoError("malformed seed line in " + path);
    seed.pairs.push_back({fields[0], fields[1], parse_double(fields[2])});
  }
  return seed;
}

void write_cross_sessions(const std::string& path,
                          const std::vector<corpus::CrossSession>& sessions) {
  std::vector<corpus::Event> events;
  for (const auto& cs : sessions) {
    std::int64_t ts = 0;
    for (const auto& p : cs.source.products) {
      events.push_back({cs.source.session_id, p, ts, corpus::EventType::View,
                        cs.source.shop_id});
      ts += 1500;
    }
    for (const auto& p : cs.target.products) {
      events.push_back({cs.target.session_id, p, ts, corpus::EventType::View,
                        cs.target.shop_id});
      ts += 1500;
    }
  }
  write_events(path, events);
}

std::vector<corpus::CrossSession> read_cross_sessions(const std::string& path,
                                                      const std::string& source_shop,
                                                      const std::string& target_shop) {
  const auto parsed = read_events(path);
  // Keyed by pair id; the shop column separates the halves. No bot or
  // length filtering here: cross sessions are evaluation data.
  std::map<std::string, corpus::CrossSession> pairs;
  corpus::SessionizeOptions opts;
  opts.bot_event_threshold = std::numeric_limits<std::size_t>::max();
  opts.bot_min_median_gap_ms = std::numeric_limits<std::int64_t>::min();
  opts.min_session_length = 1;
  const auto grouped = corpus::sessionize(parsed.events, opts);
  for (const auto& s : grouped.sessions) {
    auto& pair = pairs[s.session_id];
    if (s.shop_id == source_shop) {
      pair.source = s;
    } else if (s.shop_id == target_shop) {
      pair.target = s;
    } else {
      throw ValidationError("cross session file mentions unexpected shop '" + s.shop_id + "'");
    }
  }
  std::vector<corpus::CrossSession> out;
  out.reserve(pairs.size());
  for (auto& [id, pair] : pairs) {
    if (!pair.source.products.empty() && !pair.target.products.empty()) {
      out.push_back(std::move(pair));
    }
  }
  return out;
}

void write_ground_truth(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& pairs) {
  auto out = open_out(path);
  for (const auto& [a, b] : pairs) out << a << '\t' << b << '\n';
}

std::vector<std::pair<std::string, std::string>> read_ground_truth(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2) throw IoError("malformed ground truth line in " + path);
    pairs.emplace_back(fields[0], fields[1]);
  }
  return pairs;
}

void write_queries(const std::string& path, const std::vector<typeahead::QueryItem>& items) {
  auto out = open_out(path);
  for (const auto& item : items) {
    out << item.query << '\t' << item.session.session_id << '\t' << item.shop_id << '\n';
  }
}

std::vector<QueryRecord> read_queries(const std::string& path) {
  auto in = open_in(path);
  std::vector<QueryRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) throw IoError("malformed query line in " + path);
    out.push_back({fields[0], fields[1], fields[2]});
  }
  return out;
}

std::vector<typeahead::QueryItem> attach_sessions(const std::vector<QueryRecord>& records,
                                                  const std::vector<corpus::Session>& sessions) {
  std::unordered_map<std::string, const corpus::Session*> by_id;
  for (const auto& s : sessions) by_id[s.session_id] = &s;
  std::vector<typeahead::QueryItem> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = by_id.find(r.session_id);
    if (it == by_id.end()) {
      throw ValidationError("query references unknown session '" + r.session_id + "'");
    }
    out.push_back({r.query, *it->second, r.shop_id});
  }
  return out;
}

void write_tm_model(const std::string& path, const align::TranslationModel& model) {
  json j;
  j["source_vocab"] = vocab_to_json(model.source_vocab);
  j["target_vocab"] = vocab_to_json(model.target_vocab);
  j["src_embed"] = mat_to_json(model.src_embed);
  j["tgt_embed"] = mat_to_json(model.tgt_embed);
  j["encoder"] = gru_to_json(model.encoder);
  j["decoder"] = gru_to_json(model.decoder);
  j["w_out"] = mat_to_json(model.w_out);
  j["b_out"] = vec_to_json(model.b_out);
  j["hidden"] = model.config.hidden;
  j["max_decode_steps"] = model.config.max_decode_steps;
  write_text_file(path, j.dump());
}

align::TranslationModel read_tm_model(const std::string& path) {
  const json j = json::parse(read_text_file(path));
  align::TranslationModel m;
  m.source_vocab = vocab_from_json(j.at("source_vocab"));
  m.target_vocab = vocab_from_json(j.at("target_vocab"));
  m.src_embed = mat_from_json(j.at("src_embed"));
  m.tgt_embed = mat_from_json(j.at("tgt_embed"));
  m.encoder = gru_from_json(j.at("encoder"));
  m.decoder = gru_from_json(j.at("decoder"));
  m.w_out = mat_from_json(j.at("w_out"));
  m.b_out = vec_from_json(j.at("b_out"));
  m.config.hidden = j.at("hidden").get<int>();
  m.config.max_decode_steps = j.at("max_decode_steps").get<int>();
  return m;
}

void write_lm_model(const std::string& path, const typeahead::CondLM& model) {
  json j;
  j["charset"] = model.charset.chars();
  j["intent_dim"] = model.intent_dim;
  j["char_embed"] = mat_to_json(model.char_embed);
  j["intent_proj"] = mat_to_json(model.intent_proj);
  j["intent_bias"] = vec_to_json(model.intent_bias);
  j["cell"] = gru_to_json(model.cell);
  j["w_out"] = mat_to_json(model.w_out);
  j["b_out"] = vec_to_json(model.b_out);
  write_text_file(path, j.dump());
}

typeahead::CondLM read_lm_model(const std::string& path) {
  const json j = json::parse(read_text_file(path));
  typeahead::CondLM m;
  const auto chars = j.at("charset").get<std::string>();
  std::vector<typeahead::QueryItem> probe{{chars, {}, ""}};
  m.charset = typeahead::Charset(probe);
  if (m.charset.chars() != chars) {
    throw IoError("charset in " + path + " is not sorted/unique");
  }
  m.intent_dim = j.at("intent_dim").get<int>();
  m.char_embed = mat_from_json(j.at("char_embed"));
  m.intent_proj = mat_from_json(j.at("intent_proj"));
  m.intent_bias = vec_from_json(j.at("intent_bias"));
  m.cell = gru_from_json(j.at("cell"));
  m.w_out = mat_from_json(j.at("w_out"));
  m.b_out = vec_from_json(j.at("b_out"));
  return m;
}

void write_report_jsonl(const std::string& path, const eval::EvalReport& report) {
  auto out = open_out(path);
  json agg{{"task", report.task},         {"k", report.k},
           {"ndcg", report.ndcg},         {"hit_rate", report.hit_rate},
           {"mrr", report.mrr},           {"evaluated", report.evaluated},
           {"skipped", report.skipped}};
  out << agg.dump() << '\n';
  for (const auto& r : report.records) {
    json rec{{"session", r.session_id}, {"hit_rank", r.hit_rank},
             {"top", r.top_prediction}, {"target", r.target},
             {"ndcg", r.ndcg},          {"hit", r.hit}};
    out << rec.dump() << '\n';
  }
}

std::string read_text_file(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) throw IoError("write failure: " + path);
}

std::string file_checksum(const std::string& path) {
  const std::uint64_t h = fnv1a(read_text_file(path));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace shopalign::io
