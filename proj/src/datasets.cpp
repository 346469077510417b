#include "stalesim/datasets.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

namespace stalesim {

namespace fs = std::filesystem;

void RatingMatrix::recount() {
  row_counts.assign(static_cast<std::size_t>(rows), 0);
  col_counts.assign(static_cast<std::size_t>(cols), 0);
  for (const auto& e : entries) {
    ++row_counts[e.row];
    ++col_counts[e.col];
  }
}

std::size_t Corpus::num_tokens() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.size();
  return n;
}

namespace {

std::uint32_t read_be32(std::istream& is, std::size_t& offset) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated IDX header", offset);
  offset += 4;
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::ifstream open_or_throw(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw MissingFileError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

Eigen::MatrixXd read_idx_images(std::istream& is) {
  std::size_t offset = 0;
  const std::uint32_t magic = read_be32(is, offset);
  if (magic != 0x00000803u) throw FormatError("bad IDX image magic " + std::to_string(magic), 0);
  const std::uint32_t count = read_be32(is, offset);
  const std::uint32_t rows = read_be32(is, offset);
  const std::uint32_t cols = read_be32(is, offset);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(count));
  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t n = 0; n < count; ++n) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
      throw FormatError("truncated IDX image data", offset);
    offset += pixels;
    for (std::size_t k = 0; k < pixels; ++k) out(static_cast<Eigen::Index>(k), n) = buf[k] / 255.0;
  }
  return out;
}

std::vector<int> read_idx_labels(std::istream& is) {
  std::size_t offset = 0;
  const std::uint32_t magic = read_be32(is, offset);
  if (magic != 0x00000801u) throw FormatError("bad IDX label magic " + std::to_string(magic), 0);
  const std::uint32_t count = read_be32(is, offset);
  std::vector<unsigned char> buf(count);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count)))
    throw FormatError("truncated IDX label data", offset);
  return {buf.begin(), buf.end()};
}

ClassificationData load_mnist(const fs::path& images, const fs::path& labels) {
  auto img = open_or_throw(images, std::ios::binary);
  auto lab = open_or_throw(labels, std::ios::binary);
  ClassificationData d;
  d.features = read_idx_images(img);
  d.labels = read_idx_labels(lab);
  if (static_cast<std::size_t>(d.features.cols()) != d.labels.size())
    throw FormatError("image and label counts differ", 0);
  d.num_classes = 10;
  return d;
}

RatingMatrix read_movielens(std::istream& is) {
  RatingMatrix m;
  std::unordered_map<std::string, std::uint32_t> users;
  std::unordered_map<std::string, std::uint32_t> movies;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 4> f;
    std::size_t start = 0;
    for (int k = 0; k < 4; ++k) {
      const std::size_t sep = line.find("::", start);
      if (k < 3 && sep == std::string::npos) throw FormatError("expected UserID::MovieID::Rating::Timestamp", line_no);
      f[k] = line.substr(start, k < 3 ? sep - start : std::string::npos);
      start = sep + 2;
    }
    double rating = 0.0;
    try {
      std::size_t used = 0;
      rating = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw FormatError("unparsable rating '" + f[2] + "'", line_no);
    }
    auto [u, u_new] = users.try_emplace(f[0], static_cast<std::uint32_t>(users.size()));
    auto [v, v_new] = movies.try_emplace(f[1], static_cast<std::uint32_t>(movies.size()));
    m.entries.push_back(Rating{u->second, v->second, rating});
  }
  m.rows = static_cast<int>(users.size());
  m.cols = static_cast<int>(movies.size());
  m.recount();
  return m;
}

RatingMatrix load_movielens(const fs::path& path) {
  auto in = open_or_throw(path);
  return read_movielens(in);
}

Corpus read_bag_of_words(std::istream& is, int vocab_hint) {
  Corpus c;
  std::string line;
  std::size_t line_no = 0;
  long max_id = -1;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::uint32_t> doc;
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const long id = std::strtol(tok.c_str(), &end, 10);
      if (*end != '\0' || id < 0) throw FormatError("bad token id '" + tok + "'", line_no);
      if (vocab_hint > 0 && id >= vocab_hint) throw FormatError("token id exceeds vocabulary", line_no);
      max_id = std::max(max_id, id);
      doc.push_back(static_cast<std::uint32_t>(id));
    }
    if (!doc.empty()) c.docs.push_back(std::move(doc));
  }
  c.vocab = vocab_hint > 0 ? vocab_hint : static_cast<int>(max_id + 1);
  return c;
}

Corpus load_bag_of_words(const fs::path& path, int vocab_hint) {
  auto in = open_or_throw(path);
  return read_bag_of_words(in, vocab_hint);
}

fs::path resolve_data_path(const fs::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("STALESIM_DATA_DIR"); root && *root) return fs::path(root) / path;
  return path;
}

ClassificationSplit make_gaussian_clusters(const ClusterParams& p, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n_clusters = p.classes * std::max(p.clusters_per_class, 1);
  Eigen::MatrixXd centers(p.features, n_clusters);
  for (int c = 0; c < n_clusters; ++c) {
    for (int f = 0; f < p.features; ++f) centers(f, c) = normal(rng);
  }
  std::uniform_int_distribution<int> pick_cluster(0, std::max(p.clusters_per_class, 1) - 1);

  auto generate = [&](std::size_t n) {
    ClassificationData d;
    d.num_classes = p.classes;
    d.features.resize(p.features, static_cast<Eigen::Index>(n));
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i % static_cast<std::size_t>(p.classes));
      const int cluster = label + p.classes * pick_cluster(rng);
      for (int f = 0; f < p.features; ++f) {
        double x = centers(f, cluster) + p.spread * normal(rng);
        if (p.unit_interval) x = 1.0 / (1.0 + std::exp(-x));
        d.features(f, static_cast<Eigen::Index>(i)) = x;
      }
      d.labels[i] = label;
    }
    return d;
  };
  ClassificationSplit split;
  split.train = generate(p.train_samples);
  split.test = generate(p.test_samples);
  return split;
}

PlantedMatrix make_low_rank(const LowRankParams& p, std::uint64_t seed) {
  Rng rng(seed);
  const double scale = 1.0 / std::pow(static_cast<double>(p.rank), 0.25);
  std::normal_distribution<double> factor(0.0, scale);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  PlantedMatrix out;
  const std::size_t r = static_cast<std::size_t>(p.rank);
  out.factors.resize((static_cast<std::size_t>(p.rows) + p.cols) * r);
  for (double& v : out.factors) v = factor(rng);
  const double* L = out.factors.data();
  const double* R = out.factors.data() + static_cast<std::size_t>(p.rows) * r;

  out.data.rows = p.rows;
  out.data.cols = p.cols;
  for (int i = 0; i < p.rows; ++i) {
    for (int j = 0; j < p.cols; ++j) {
      if (p.density < 1.0 && coin(rng) >= p.density) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < r; ++k) dot += L[i * r + k] * R[j * r + k];
      out.data.entries.push_back(
          Rating{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), dot + p.noise * noise(rng)});
    }
  }
  out.data.recount();
  return out;
}

namespace {

std::vector<double> sample_dirichlet(int n, double concentration, Rng& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (double& x : w) {
    x = gamma(rng);
    total += x;
  }
  if (!(total > 0.0)) {
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::fill(w.begin(), w.end(), 0.0);
    w[pick(rng)] = 1.0;
    return w;
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

Corpus make_lda_corpus(const LdaCorpusParams& p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::discrete_distribution<int>> topic_words;
  topic_words.reserve(static_cast<std::size_t>(p.topics));
  for (int k = 0; k < p.topics; ++k) {
    const auto w = sample_dirichlet(p.vocab, p.beta, rng);
    topic_words.emplace_back(w.begin(), w.end());
  }
  std::poisson_distribution<int> length(p.mean_doc_length);
  Corpus c;
  c.vocab = p.vocab;
  c.docs.resize(static_cast<std::size_t>(p.docs));
  for (auto& doc : c.docs) {
    const auto theta = sample_dirichlet(p.topics, p.alpha, rng);
    std::discrete_distribution<int> topic(theta.begin(), theta.end());
    const int n = std::max(1, length(rng));
    doc.resize(static_cast<std::size_t>(n));
    for (auto& w : doc) w = static_cast<std::uint32_t>(topic_words[topic(rng)](rng));
  }
  return c;
}

}  // namespace stalesim
