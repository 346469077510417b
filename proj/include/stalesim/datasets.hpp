#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

#include <Eigen/Dense>

#include "stalesim/common.hpp"

namespace stalesim {

// Samples are columns.
struct ClassificationData {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int input_dim() const { return static_cast<int>(features.rows()); }
};

struct ClassificationSplit {
  ClassificationData train;
  ClassificationData test;
};

struct Rating {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;
};

struct RatingMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<Rating> entries;
  std::vector<int> row_counts;
  std::vector<int> col_counts;

  void recount();
};

struct Corpus {
  int vocab = 0;
  std::vector<std::vector<std::uint32_t>> docs;

  std::size_t num_tokens() const;
};

// --- file formats ---------------------------------------------------------

// IDX image file (magic 0x00000803): returns pixels scaled to [0,1], one
// column per image.
Eigen::MatrixXd read_idx_images(std::istream& is);
// IDX label file (magic 0x00000801).
std::vector<int> read_idx_labels(std::istream& is);
ClassificationData load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);

// `UserID::MovieID::Rating::Timestamp` lines; ids are remapped densely in
// order of first appearance.
RatingMatrix read_movielens(std::istream& is);
RatingMatrix load_movielens(const std::filesystem::path& path);

// One document per line, whitespace separated integer token ids.
Corpus read_bag_of_words(std::istream& is, int vocab_hint = 0);
Corpus load_bag_of_words(const std::filesystem::path& path, int vocab_hint = 0);

// Resolves a relative path against $STALESIM_DATA_DIR when set.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

// --- synthetic generators -------------------------------------------------

struct ClusterParams {
  std::size_t train_samples = 4000;
  std::size_t test_samples = 1000;
  int features = 32;
  int classes = 10;
  int clusters_per_class = 1;
  // Standard deviation of samples around their cluster center; centers are
  // drawn from N(0, I).
  double spread = 1.0;
  // Squash features into [0,1] with a logistic map (for VAE inputs).
  bool unit_interval = false;
};

ClassificationSplit make_gaussian_clusters(const ClusterParams& p, std::uint64_t seed);

struct LowRankParams {
  int rows = 100;
  int cols = 100;
  int rank = 5;
  double noise = 0.1;
  // Fraction of cells observed.
  double density = 1.0;
};

struct PlantedMatrix {
  RatingMatrix data;
  // Planted factors laid out like the MF parameter vector (L rows then R rows).
  ParamVector factors;
};

PlantedMatrix make_low_rank(const LowRankParams& p, std::uint64_t seed);

struct LdaCorpusParams {
  int docs = 2000;
  int vocab = 1000;
  int topics = 10;
  double alpha = 0.1;
  double beta = 0.1;
  double mean_doc_length = 50.0;
};

Corpus make_lda_corpus(const LdaCorpusParams& p, std::uint64_t seed);

}  // namespace stalesim
