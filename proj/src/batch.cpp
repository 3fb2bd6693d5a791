#include "dcmon/batch.hpp"

#include <stdexcept>

#include <json.hpp>

namespace dcmon {

std::size_t MetricsBatch::sample_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [level, e] : expositions) n += e.sample_count();
  return n;
}

std::string encode_batch(const MetricsBatch& batch) {
  nlohmann::json j;
  j["node"] = batch.node_id;
  j["dc"] = batch.dc_id;
  j["seq"] = batch.batch_seq;
  j["segments"] = batch.segment_seqs;
  auto& parts = j["expositions"] = nlohmann::json::array();
  for (const auto& [level, e] : batch.expositions) {
    parts.push_back({{"level", to_string(level)}, {"body", om::serialize_exposition(e)}});
  }
  return j.dump();
}

MetricsBatch decode_batch(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
    MetricsBatch b;
    b.node_id = j.at("node").get<std::string>();
    b.dc_id = j.at("dc").get<std::string>();
    b.batch_seq = j.at("seq").get<std::uint64_t>();
    b.segment_seqs = j.at("segments").get<std::vector<std::uint64_t>>();
    for (const auto& part : j.at("expositions")) {
      auto level = parse_level(part.at("level").get<std::string>());
      if (!level) throw std::invalid_argument("unknown level in batch");
      b.expositions.emplace_back(*level, om::parse_exposition(part.at("body").get<std::string>()));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed batch: ") + e.what());
  }
}

}  // namespace dcmon
