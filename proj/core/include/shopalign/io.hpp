#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "shopalign/align.hpp"
#include "shopalign/catalog.hpp"
#include "shopalign/corpus.hpp"
#include "shopalign/embed.hpp"
#include "shopalign/eval.hpp"
#include "shopalign/tm.hpp"
#include "shopalign/typeahead.hpp"

namespace shopalign::io {

// Event file: UTF-8 TSV (session_id, product_id, timestamp_ms, event_type, shop_id).
void write_events(const std::string& path, const std::vector<corpus::Event>& events);
corpus::ParseResult read_events(const std::string& path, const corpus::ParseOptions& opts = {});

// Session file: TSV (session_id, shop_id, space-separated product ids).
void write_sessions(const std::string& path, const std::vector<corpus::Session>& sessions);
std::vector<corpus::Session> read_sessions(const std::string& path);

// Catalog file: TSV (product_id, activity_label, one column per feature value).
void write_catalog(const std::string& path, const Catalog& catalog);
Catalog read_catalog(const std::string& path);

// word2vec text format: header "N d", then product_id followed by d floats.
void write_embeddings(const std::string& path, const embed::EmbeddingTable& table);
embed::EmbeddingTable read_embeddings(const std::string& path);

// Alignment map: header "d_source d_target method", then W row-major
// (d_target rows of d_source coefficients), optional trailing "bias ..." line.
void write_alignment_map(const std::string& path, const align::AlignmentMap& map);
align::AlignmentMap read_alignment_map(const std::string& path);

// Seed dictionary: TSV (source_id, target_id, weight).
void write_seed_dictionary(const std::string& path, const align::SeedDictionary& seed);
align::SeedDictionary read_seed_dictionary(const std::string& path);

// Cross-shop sessions reuse the event format; the pair id is the session id
// and the shop column distinguishes the two halves.
void write_cross_sessions(const std::string& path,
                          const std::vector<corpus::CrossSession>& sessions);
std::vector<corpus::CrossSession> read_cross_sessions(const std::string& path,
                                                      const std::string& source_shop,
                                                      const std::string& target_shop);

// Ground truth: TSV (source product, corresponding target product).
void write_ground_truth(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& pairs);
std::vector<std::pair<std::string, std::string>> read_ground_truth(const std::string& path);

// Query corpus: TSV (query, session_id, shop_id); sessions live in a
// separate session or event file and are joined by id.
struct QueryRecord {
  std::string query;
  std::string session_id;
  std::string shop_id;
};
void write_queries(const std::string& path, const std::vector<typeahead::QueryItem>& items);
std::vector<QueryRecord> read_queries(const std::string& path);
std::vector<typeahead::QueryItem> attach_sessions(const std::vector<QueryRecord>& records,
                                                  const std::vector<corpus::Session>& sessions);

// Model files (JSON).
void write_tm_model(const std::string& path, const align::TranslationModel& model);
align::TranslationModel read_tm_model(const std::string& path);
void write_lm_model(const std::string& path, const typeahead::CondLM& model);
typeahead::CondLM read_lm_model(const std::string& path);

// Eval report: one aggregate JSON line, then one line per session record.
void write_report_jsonl(const std::string& path, const eval::EvalReport& report);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// FNV-1a of the file contents, hex-encoded.
std::string file_checksum(const std::string& path);

}  // namespace shopalign::io
