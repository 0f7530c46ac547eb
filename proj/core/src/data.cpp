#include "mmfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "mmfl/error.hpp"

namespace mmfl::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\"\r");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
  const std::string t = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v)) {
    throw InputError("line " + std::to_string(line) + ": non-numeric value '" + cell +
                     "' in column '" + column + "'");
  }
  return v;
}

}  // namespace

nn::Sequence Flow::as_sequence() const {
  const auto f = feature_count();
  nn::Sequence seq(static_cast<Eigen::Index>(packets.size()), static_cast<Eigen::Index>(f));
  for (std::size_t t = 0; t < packets.size(); ++t) {
    for (std::size_t k = 0; k < f; ++k) {
      seq(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = packets[t].features[k];
    }
  }
  return seq;
}

int label_from_packets(const std::vector<PacketRecord>& packets, double ratio_threshold) {
  if (packets.empty()) return 0;
  const auto malicious = std::count_if(packets.begin(), packets.end(),
                                       [](const PacketRecord& p) { return p.label == 1; });
  const double ratio = static_cast<double>(malicious) / static_cast<double>(packets.size());
  return ratio > ratio_threshold ? 1 : 0;
}

std::vector<Flow> generate_synthetic(std::mt19937_64& rng, std::size_t features,
                                     std::size_t n_flows, double class_sep,
                                     double malicious_fraction) {
  if (features < 2) throw InputError("generate_synthetic: need at least 2 features");
  if (n_flows == 0) throw InputError("generate_synthetic: need at least 1 flow");
  if (malicious_fraction < 0.0 || malicious_fraction > 1.0) {
    throw InputError("generate_synthetic: malicious fraction outside [0, 1]");
  }
  const auto n_malicious =
      static_cast<std::size_t>(std::llround(malicious_fraction * static_cast<double>(n_flows)));
  std::vector<int> flow_labels(n_flows, 0);
  std::fill_n(flow_labels.begin(), n_malicious, 1);
  std::shuffle(flow_labels.begin(), flow_labels.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> extra(0, 2);
  std::vector<Flow> flows(n_flows);
  for (std::size_t i = 0; i < n_flows; ++i) {
    Flow& flow = flows[i];
    flow.flow_label = flow_labels[i];
    const int malicious_packets = flow.flow_label == 1 ? 8 + extra(rng) : extra(rng);
    std::vector<int> packet_labels(kFlowLength, 0);
    std::fill_n(packet_labels.begin(), malicious_packets, 1);
    std::shuffle(packet_labels.begin(), packet_labels.end(), rng);
    flow.packets.resize(kFlowLength);
    for (std::size_t t = 0; t < kFlowLength; ++t) {
      auto& packet = flow.packets[t];
      packet.label = packet_labels[t];
      const double mean = packet.label == 1 ? class_sep : -class_sep;
      packet.features.resize(features);
      for (auto& v : packet.features) v = mean + noise(rng);
    }
  }
  return flows;
}

CsvSchema CsvSchema::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("schema: ") + e.what());
  }
  CsvSchema schema;
  if (!j.contains("features") || !j["features"].is_array()) {
    throw InputError("schema: missing 'features' array");
  }
  for (const auto& c : j["features"]) schema.feature_columns.push_back(c.get<std::string>());
  schema.label_column = j.value("label", std::string("label"));
  schema.normalize = j.value("normalize", true);
  if (schema.feature_columns.empty()) throw InputError("schema: no feature columns");
  return schema;
}

CsvSchema CsvSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

CsvSchema CsvSchema::synthetic(std::size_t features) {
  CsvSchema schema;
  for (std::size_t k = 0; k < features; ++k) schema.feature_columns.push_back("f" + std::to_string(k));
  return schema;
}

std::vector<Flow> load_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("csv: missing header row");
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[trim(header[i])] = i;

  auto find = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw InputError("csv: missing column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> feature_idx;
  for (const auto& name : schema.feature_columns) feature_idx.push_back(find(name));
  const std::size_t label_idx = find(schema.label_column);

  std::vector<PacketRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    PacketRecord rec;
    rec.features.reserve(feature_idx.size());
    for (std::size_t k = 0; k < feature_idx.size(); ++k) {
      const auto idx = feature_idx[k];
      if (idx >= cells.size()) {
        throw InputError("line " + std::to_string(line_no) + ": missing value for column '" +
                         schema.feature_columns[k] + "'");
      }
      rec.features.push_back(parse_cell(cells[idx], line_no, schema.feature_columns[k]));
    }
    if (label_idx >= cells.size()) {
      throw InputError("line " + std::to_string(line_no) + ": missing label");
    }
    const double label = parse_cell(cells[label_idx], line_no, schema.label_column);
    if (label != 0.0 && label != 1.0) {
      throw InputError("line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    rec.label = static_cast<int>(label);
    rows.push_back(std::move(rec));
  }

  std::vector<Flow> flows;
  const std::size_t complete = rows.size() / kFlowLength;
  flows.reserve(complete);
  for (std::size_t f = 0; f < complete; ++f) {
    Flow flow;
    flow.packets.assign(std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(f * kFlowLength)),
                        std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>((f + 1) * kFlowLength)));
    flow.flow_label = label_from_packets(flow.packets);
    flows.push_back(std::move(flow));
  }
  if (schema.normalize) normalize_columns(flows);
  return flows;
}

std::vector<Flow> load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file " + path.string());
  return load_csv(in, schema);
}

void write_csv(std::ostream& out, std::span<const Flow> flows, const CsvSchema& schema) {
  for (const auto& name : schema.feature_columns) out << name << ',';
  out << schema.label_column << '\n';
  out.precision(17);
  for (const auto& flow : flows) {
    for (const auto& p : flow.packets) {
      if (p.features.size() != schema.feature_columns.size()) {
        throw InputError("write_csv: packet width differs from schema");
      }
      for (double v : p.features) out << v << ',';
      out << p.label << '\n';
    }
  }
}

void normalize_columns(std::vector<Flow>& flows) {
  if (flows.empty()) return;
  const auto f = flows.front().feature_count();
  std::vector<double> lo(f, std::numeric_limits<double>::infinity());
  std::vector<double> hi(f, -std::numeric_limits<double>::infinity());
  for (const auto& flow : flows) {
    for (const auto& p : flow.packets) {
      for (std::size_t k = 0; k < f; ++k) {
        lo[k] = std::min(lo[k], p.features[k]);
        hi[k] = std::max(hi[k], p.features[k]);
      }
    }
  }
  for (auto& flow : flows) {
    for (auto& p : flow.packets) {
      for (std::size_t k = 0; k < f; ++k) {
        const double range = hi[k] - lo[k];
        p.features[k] = range > 0.0 ? (p.features[k] - lo[k]) / range : 0.0;
      }
    }
  }
}

DatasetSplit partition(const std::vector<Flow>& flows, std::span<const std::size_t> sizes,
                       std::size_t stations, std::size_t edge_size, std::mt19937_64& rng) {
  const std::size_t train_total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (train_total > flows.size()) {
    throw InputError("partition: devices need " + std::to_string(train_total) +
                     " flows but only " + std::to_string(flows.size()) + " are available");
  }
  if (stations > 0 && edge_size > train_total) {
    throw InputError("partition: edge sets need " + std::to_string(edge_size) +
                     " flows but the training pool has " + std::to_string(train_total));
  }
  std::vector<std::size_t> order(flows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split;
  split.devices.resize(sizes.size());
  std::size_t cursor = 0;
  for (std::size_t u = 0; u < sizes.size(); ++u) {
    split.devices[u].reserve(sizes[u]);
    for (std::size_t k = 0; k < sizes[u]; ++k) split.devices[u].push_back(flows[order[cursor++]]);
  }
  for (std::size_t k = cursor; k < order.size(); ++k) split.test.push_back(flows[order[k]]);

  std::vector<std::size_t> pool(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_total));
  split.edge.resize(stations);
  for (std::size_t m = 0; m < stations; ++m) {
    std::vector<std::size_t> picked;
    std::sample(pool.begin(), pool.end(), std::back_inserter(picked), edge_size, rng);
    split.edge[m].reserve(edge_size);
    for (auto idx : picked) split.edge[m].push_back(flows[idx].as_sequence());
  }
  return split;
}

int flow_verdict(std::span<const double> packet_probs, double packet_threshold,
                 double ratio_threshold) {
  if (packet_probs.empty()) return 0;
  const auto malicious = std::count_if(packet_probs.begin(), packet_probs.end(),
                                       [&](double p) { return p > packet_threshold; });
  const double ratio = static_cast<double>(malicious) / static_cast<double>(packet_probs.size());
  return ratio > ratio_threshold ? 1 : 0;
}

nn::LabeledBatch to_batch(std::span<const Flow> flows) {
  nn::LabeledBatch batch;
  batch.inputs.reserve(flows.size());
  batch.labels.reserve(flows.size());
  for (const auto& f : flows) {
    batch.inputs.push_back(f.as_sequence());
    batch.labels.push_back(f.flow_label);
  }
  return batch;
}

double evaluate_accuracy(const PacketScorer& scorer, std::span<const Flow> test) {
  if (test.empty()) throw InputError("evaluate_accuracy: empty test set");
  std::size_t correct = 0;
  for (const auto& flow : test) {
    if (flow_verdict(scorer(flow)) == flow.flow_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double evaluate_accuracy(const nn::ModelWeights& weights, std::span<const Flow> test) {
  return evaluate_accuracy(
      [&](const Flow& f) { return nn::step_probabilities(weights, f.as_sequence()); }, test);
}

}  // namespace mmfl::data
