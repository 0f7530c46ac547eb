#pragma once

// Flow-structured binary classification data: synthetic generator, CSV
// ingestion, device partitioning and flow-level verdicts.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmfl/tensor_nn.hpp"

namespace mmfl::data {

inline constexpr std::size_t kFlowLength = 10;
inline constexpr double kPacketThreshold = 0.5;
inline constexpr double kFlowRatioThreshold = 0.7;

struct PacketRecord {
  std::vector<double> features;
  int label = 0;  ///< 0 benign, 1 malicious
};

struct Flow {
  std::vector<PacketRecord> packets;
  int flow_label = 0;

  std::size_t feature_count() const { return packets.empty() ? 0 : packets.front().features.size(); }
  nn::Sequence as_sequence() const;
};

/// Flow label implied by its packet labels (malicious ratio strictly above 0.7).
int label_from_packets(const std::vector<PacketRecord>& packets,
                       double ratio_threshold = kFlowRatioThreshold);

/// Two class-conditional Gaussians with means -class_sep and +class_sep on every
/// feature and unit variance. Malicious flows carry 8-10 malicious packets,
/// benign flows 0-2. Exactly round(malicious_fraction * n_flows) flows are malicious.
std::vector<Flow> generate_synthetic(std::mt19937_64& rng, std::size_t features,
                                     std::size_t n_flows, double class_sep,
                                     double malicious_fraction = 0.5);

struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  bool normalize = true;

  /// Reads {"features": [...], "label": "...", "normalize": bool}.
  static CsvSchema from_json(const std::string& text);
  static CsvSchema load(const std::filesystem::path& path);
  /// f0..f{n-1} plus "label".
  static CsvSchema synthetic(std::size_t features);
};

/// Groups consecutive rows into 10-packet flows; a trailing partial group is
/// dropped. Throws InputError naming a missing column or the line of a bad cell.
std::vector<Flow> load_csv(std::istream& in, const CsvSchema& schema);
std::vector<Flow> load_csv(const std::filesystem::path& path, const CsvSchema& schema);

void write_csv(std::ostream& out, std::span<const Flow> flows, const CsvSchema& schema);

/// Per-column min-max scaling over every packet; constant columns become 0.
void normalize_columns(std::vector<Flow>& flows);

struct DatasetSplit {
  std::vector<std::vector<Flow>> devices;
  std::vector<Flow> test;
  /// Unlabeled knowledge-transfer sets, one per base station.
  std::vector<std::vector<nn::Sequence>> edge;
};

/// Disjoint random assignment of `sizes[u]` flows to device u; the rest is
/// the test set. Each edge set draws `edge_size` flows from the training pool.
DatasetSplit partition(const std::vector<Flow>& flows, std::span<const std::size_t> sizes,
                       std::size_t stations, std::size_t edge_size, std::mt19937_64& rng);

int flow_verdict(std::span<const double> packet_probs, double packet_threshold = kPacketThreshold,
                 double ratio_threshold = kFlowRatioThreshold);

nn::LabeledBatch to_batch(std::span<const Flow> flows);

using PacketScorer = std::function<std::vector<double>(const Flow&)>;

double evaluate_accuracy(const PacketScorer& scorer, std::span<const Flow> test);
double evaluate_accuracy(const nn::ModelWeights& weights, std::span<const Flow> test);

}  // namespace mmfl::data
