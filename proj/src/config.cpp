#include "stalesim/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace stalesim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key) {
    if (!(std::isalpha(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_' ||
          c == '.'))
      return false;
  }
  return true;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::string hex(std::uint64_t v, int digits) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str().substr(16 - static_cast<std::size_t>(digits));
}

// Typed access that remembers which keys were consumed.
class Reader {
 public:
  explicit Reader(const KeyValueConfig& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.contains(key); }

  std::string str(const std::string& key, const std::string& fallback) {
    const auto* v = take(key);
    return v ? *v : fallback;
  }

  template <typename T>
  T integer(const std::string& key, T fallback) {
    const auto* v = take(key);
    return v ? parse_integer<T>(key, *v) : fallback;
  }

  double real(const std::string& key, double fallback) {
    const auto* v = take(key);
    return v ? parse_real(key, *v) : fallback;
  }

  std::optional<double> maybe_real(const std::string& key) {
    const auto* v = take(key);
    if (!v) return std::nullopt;
    return parse_real(key, *v);
  }

  bool boolean(const std::string& key, bool fallback) {
    const auto* v = take(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
  }

  template <typename T>
  std::vector<T> integer_list(const std::string& key, std::vector<T> fallback) {
    const auto* v = take(key);
    if (!v) return fallback;
    std::vector<T> out;
    for (const auto& item : split_list(*v)) out.push_back(parse_integer<T>(key, item));
    return out;
  }

  std::vector<std::string> string_list(const std::string& key) {
    const auto* v = take(key);
    return v ? split_list(*v) : std::vector<std::string>{};
  }

  void reject_unused() const {
    std::string unknown;
    for (const auto& [k, v] : kv_.entries()) {
      if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    }
    if (!unknown.empty()) throw ConfigError("keys not used by this configuration: " + unknown);
  }

 private:
  const std::string* take(const std::string& key) {
    used_.insert(key);
    return kv_.find(key);
  }

  template <typename T>
  static T parse_integer(const std::string& key, const std::string& text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw ConfigError(key + ": expected an integer, got '" + text + "'");
    return value;
  }

  static double parse_real(const std::string& key, const std::string& text) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
      throw ConfigError(key + ": expected a finite number, got '" + text + "'");
    return value;
  }

  const KeyValueConfig& kv_;
  std::set<std::string> used_;
};

const std::set<std::string> kClassificationWorkloads = {"mlr", "dnn", "vae"};

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError(key + " is required for this data source");
  const auto resolved = resolve_data_path(path);
  if (!std::filesystem::exists(resolved)) throw ConfigError(key + ": file not found: " + resolved.string());
}

void read_optimizer(Reader& r, ExperimentConfig& cfg) {
  const auto kind = r.str("optimizer.kind", "sgd");
  cfg.optimizer = default_optimizer(kind);
  std::visit(
      [&](auto& o) {
        using T = std::decay_t<decltype(o)>;
        o.lr = r.real("optimizer.lr", o.lr);
        if constexpr (std::is_same_v<T, Momentum>) o.momentum = r.real("optimizer.momentum", o.momentum);
        if constexpr (std::is_same_v<T, Adam>) {
          o.beta1 = r.real("optimizer.beta1", o.beta1);
          o.beta2 = r.real("optimizer.beta2", o.beta2);
          o.eps = r.real("optimizer.eps", o.eps);
        }
        if constexpr (std::is_same_v<T, Adagrad>) o.eps = r.real("optimizer.eps", o.eps);
        if constexpr (std::is_same_v<T, RmsProp>) {
          o.decay = r.real("optimizer.decay", o.decay);
          o.momentum = r.real("optimizer.momentum", o.momentum);
          o.eps = r.real("optimizer.eps", o.eps);
        }
      },
      cfg.optimizer);
  validate(cfg.optimizer);
}

void write_optimizer(KeyValueConfig& kv, const OptimizerSpec& spec) {
  kv.set("optimizer.kind", optimizer_name(spec));
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        kv.set("optimizer.lr", format_double(o.lr));
        if constexpr (std::is_same_v<T, Momentum>) kv.set("optimizer.momentum", format_double(o.momentum));
        if constexpr (std::is_same_v<T, Adam>) {
          kv.set("optimizer.beta1", format_double(o.beta1));
          kv.set("optimizer.beta2", format_double(o.beta2));
          kv.set("optimizer.eps", format_double(o.eps));
        }
        if constexpr (std::is_same_v<T, Adagrad>) kv.set("optimizer.eps", format_double(o.eps));
        if constexpr (std::is_same_v<T, RmsProp>) {
          kv.set("optimizer.decay", format_double(o.decay));
          kv.set("optimizer.momentum", format_double(o.momentum));
          kv.set("optimizer.eps", format_double(o.eps));
        }
      },
      spec);
}

void read_data(Reader& r, ExperimentConfig& cfg) {
  auto& d = cfg.data;
  const auto& w = cfg.workload;
  if (w == "quadratic") {
    d.source = r.str("data.source", "synthetic");
    if (d.source != "synthetic") throw ConfigError("quadratic workload only supports data.source = synthetic");
    d.seed = r.integer<std::uint64_t>("data.seed", d.seed);
    return;
  }
  d.source = r.str("data.source", "synthetic");
  if (d.source == "synthetic") d.seed = r.integer<std::uint64_t>("data.seed", d.seed);

  if (kClassificationWorkloads.count(w)) {
    if (d.source == "synthetic") {
      auto& c = d.clusters;
      c.train_samples = r.integer<std::size_t>("data.samples", c.train_samples);
      c.test_samples = r.integer<std::size_t>("data.test_samples", c.test_samples);
      c.features = r.integer<int>("data.features", c.features);
      c.classes = r.integer<int>("data.classes", c.classes);
      c.clusters_per_class = r.integer<int>("data.clusters_per_class", c.clusters_per_class);
      c.spread = r.real("data.spread", c.spread);
      c.unit_interval = w == "vae";
      if (c.train_samples < 1 || c.test_samples < 1 || c.features < 1 || c.classes < 2 || c.clusters_per_class < 1 ||
          c.spread < 0)
        throw ConfigError("invalid synthetic cluster parameters");
    } else if (d.source == "mnist") {
      d.images = r.str("data.images", "");
      d.labels = r.str("data.labels", "");
      d.test_images = r.str("data.test_images", "");
      d.test_labels = r.str("data.test_labels", "");
      require_file("data.images", d.images);
      require_file("data.labels", d.labels);
      require_file("data.test_images", d.test_images);
      require_file("data.test_labels", d.test_labels);
    } else {
      throw ConfigError("data.source '" + d.source + "' does not fit workload " + w);
    }
  } else if (w == "mf") {
    if (d.source == "synthetic") {
      auto& l = d.low_rank;
      l.rows = r.integer<int>("data.rows", l.rows);
      l.cols = r.integer<int>("data.cols", l.cols);
      l.rank = r.integer<int>("data.rank", l.rank);
      l.noise = r.real("data.noise", l.noise);
      l.density = r.real("data.density", l.density);
      if (l.rows < 1 || l.cols < 1 || l.rank < 1 || l.noise < 0 || !(l.density > 0 && l.density <= 1))
        throw ConfigError("invalid synthetic low-rank parameters");
    } else if (d.source == "movielens") {
      d.path = r.str("data.path", "");
      require_file("data.path", d.path);
    } else {
      throw ConfigError("data.source '" + d.source + "' does not fit workload mf");
    }
  } else if (w == "lda") {
    if (d.source == "synthetic") {
      auto& c = d.corpus;
      c.docs = r.integer<int>("data.docs", c.docs);
      c.vocab = r.integer<int>("data.vocab", c.vocab);
      c.topics = r.integer<int>("data.topics", c.topics);
      c.alpha = r.real("data.alpha", c.alpha);
      c.beta = r.real("data.beta", c.beta);
      c.mean_doc_length = r.real("data.doc_length", c.mean_doc_length);
      if (c.docs < 1 || c.vocab < 1 || c.topics < 1 || !(c.alpha > 0) || !(c.beta > 0) || !(c.mean_doc_length > 0))
        throw ConfigError("invalid synthetic corpus parameters");
    } else if (d.source == "bow") {
      d.path = r.str("data.path", "");
      d.corpus.vocab = r.integer<int>("data.vocab", 0);
      require_file("data.path", d.path);
    } else {
      throw ConfigError("data.source '" + d.source + "' does not fit workload lda");
    }
  }
}

void write_data(KeyValueConfig& kv, const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  const auto& w = cfg.workload;
  kv.set("data.source", d.source);
  if (d.source == "synthetic") kv.set("data.seed", std::to_string(d.seed));
  if (w == "quadratic") return;
  if (kClassificationWorkloads.count(w)) {
    if (d.source == "synthetic") {
      const auto& c = d.clusters;
      kv.set("data.samples", std::to_string(c.train_samples));
      kv.set("data.test_samples", std::to_string(c.test_samples));
      kv.set("data.features", std::to_string(c.features));
      kv.set("data.classes", std::to_string(c.classes));
      kv.set("data.clusters_per_class", std::to_string(c.clusters_per_class));
      kv.set("data.spread", format_double(c.spread));
    } else {
      kv.set("data.images", d.images);
      kv.set("data.labels", d.labels);
      kv.set("data.test_images", d.test_images);
      kv.set("data.test_labels", d.test_labels);
    }
  } else if (w == "mf") {
    if (d.source == "synthetic") {
      const auto& l = d.low_rank;
      kv.set("data.rows", std::to_string(l.rows));
      kv.set("data.cols", std::to_string(l.cols));
      kv.set("data.rank", std::to_string(l.rank));
      kv.set("data.noise", format_double(l.noise));
      kv.set("data.density", format_double(l.density));
    } else {
      kv.set("data.path", d.path);
    }
  } else if (w == "lda") {
    if (d.source == "synthetic") {
      const auto& c = d.corpus;
      kv.set("data.docs", std::to_string(c.docs));
      kv.set("data.vocab", std::to_string(c.vocab));
      kv.set("data.topics", std::to_string(c.topics));
      kv.set("data.alpha", format_double(c.alpha));
      kv.set("data.beta", format_double(c.beta));
      kv.set("data.doc_length", format_double(c.mean_doc_length));
    } else {
      kv.set("data.path", d.path);
      kv.set("data.vocab", std::to_string(d.corpus.vocab));
    }
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, ptr);
}

KeyValueConfig KeyValueConfig::parse(std::istream& is) {
  KeyValueConfig kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw FormatError("invalid key '" + key + "'", line_no);
    if (kv.contains(key)) throw FormatError("duplicate key '" + key + "'", line_no);
    kv.entries_[key] = value;
  }
  return kv;
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open config file " + path.string());
  return parse(in);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError("invalid key '" + key + "'");
  if (value.find('\n') != std::string::npos || value.find('#') != std::string::npos)
    throw ConfigError(key + ": value may not contain newlines or '#'");
  entries_[key] = trim(value);
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig parse_experiment(const KeyValueConfig& kv) {
  Reader r(kv);
  ExperimentConfig cfg;

  cfg.workload = r.str("workload.kind", cfg.workload);
  const auto& w = cfg.workload;
  if (w == "dnn") {
    cfg.depth = r.integer<int>("workload.depth", 3);
    cfg.width = r.integer<int>("workload.width", cfg.width);
    if (cfg.depth < 0 || cfg.depth > 6) throw ConfigError("workload.depth must lie in [0, 6]");
  } else if (w == "vae") {
    cfg.depth = r.integer<int>("workload.depth", 1);
    cfg.width = r.integer<int>("workload.width", cfg.width);
    cfg.latent_dim = r.integer<int>("workload.latent_dim", cfg.latent_dim);
    if (cfg.depth < 1 || cfg.depth > 3) throw ConfigError("workload.depth must lie in [1, 3] for vae");
    if (cfg.latent_dim < 1) throw ConfigError("workload.latent_dim must be positive");
  } else if (w == "mf") {
    cfg.mf.rank = r.integer<int>("mf.rank", cfg.mf.rank);
    cfg.mf.lambda = r.real("mf.lambda", cfg.mf.lambda);
    if (cfg.mf.rank < 1 || cfg.mf.lambda < 0) throw ConfigError("mf.rank must be positive and mf.lambda >= 0");
  } else if (w == "lda") {
    cfg.lda.topics = r.integer<int>("lda.topics", cfg.lda.topics);
    cfg.lda.alpha = r.real("lda.alpha", cfg.lda.alpha);
    cfg.lda.beta = r.real("lda.beta", cfg.lda.beta);
    if (cfg.lda.topics < 1 || !(cfg.lda.alpha > 0) || !(cfg.lda.beta > 0))
      throw ConfigError("lda.topics must be positive and lda.alpha, lda.beta > 0");
  } else if (w == "quadratic") {
    auto& q = cfg.quadratic;
    q.dim = r.integer<int>("quadratic.dim", q.dim);
    q.lambda_min = r.real("quadratic.lambda_min", q.lambda_min);
    q.lambda_max = r.real("quadratic.lambda_max", q.lambda_max);
    q.linear = r.real("quadratic.linear", q.linear);
    q.rotate = r.boolean("quadratic.rotate", q.rotate);
    if (q.dim < 1 || q.lambda_min < 0 || q.lambda_max < q.lambda_min)
      throw ConfigError("quadratic needs dim >= 1 and 0 <= lambda_min <= lambda_max");
  } else if (w != "mlr") {
    throw ConfigError("unknown workload.kind '" + w + "'");
  }
  if (cfg.width < 1) throw ConfigError("workload.width must be positive");
  read_data(r, cfg);

  read_optimizer(r, cfg);

  auto& d = cfg.delay;
  d.kind = r.str("delay.kind", d.kind);
  d.staleness = r.integer<int>("delay.staleness", d.staleness);
  if (d.staleness < 0) throw ConfigError("delay.staleness must be non-negative");
  if (d.kind == "geometric") {
    d.straggler_success = r.real("delay.straggler_success", d.straggler_success);
    d.nonstraggler_success = r.maybe_real("delay.nonstraggler_success");
    d.stragglers = r.integer<int>("delay.stragglers", d.stragglers);
    d.cap = r.integer<int>("delay.cap", d.cap);
  } else if (d.kind != "uniform") {
    throw ConfigError("unknown delay.kind '" + d.kind + "'");
  }

  cfg.workers = r.integer<int>("run.workers", cfg.workers);
  if (cfg.workers < 1) throw ConfigError("run.workers must be at least 1");
  cfg.seeds = r.integer_list<std::uint64_t>("run.seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  cfg.batch_size = r.integer<std::size_t>("run.batch_size", cfg.batch_size);
  cfg.budget = r.integer<std::uint64_t>("run.budget", cfg.budget);
  cfg.eval_interval = r.integer<std::uint64_t>("run.eval_interval", cfg.eval_interval);
  if (cfg.eval_interval == 0) throw ConfigError("run.eval_interval must be positive");
  cfg.record_batch_loss = r.boolean("run.record_batch_loss", cfg.record_batch_loss);

  if (r.has("target.threshold")) {
    ConvergenceTarget t;
    t.threshold = r.real("target.threshold", 0.0);
    t.metric = r.str("target.metric", "");
    const auto dir = r.str("target.direction", "");
    if (!dir.empty()) {
      try {
        t.direction = parse_direction(dir);
      } catch (const std::exception&) {
        throw ConfigError("target.direction must be at_least or at_most, got '" + dir + "'");
      }
    } else {
      t.direction = (w == "mlr" || w == "dnn" || w == "lda") ? Direction::AtLeast : Direction::AtMost;
    }
    if (t.metric.empty()) {
      static const std::map<std::string, std::string> metric_of = {{"mlr", "accuracy"},  {"dnn", "accuracy"},
                                                                   {"vae", "test_loss"}, {"mf", "train_loss"},
                                                                   {"lda", "loglik"},    {"quadratic", "objective"}};
      t.metric = metric_of.at(w);
    }
    t.sustain = r.integer<int>("target.sustain", 1);
    if (t.sustain < 1) throw ConfigError("target.sustain must be at least 1");
    cfg.target = t;
    cfg.stop_at_target = r.boolean("target.stop", cfg.stop_at_target);
  }

  cfg.probe_enabled = r.boolean("probe.enabled", cfg.probe_enabled);
  if (cfg.probe_enabled || r.has("probe.interval") || r.has("probe.lags")) {
    auto& p = cfg.probe;
    p.interval = r.integer<std::uint64_t>("probe.interval", p.interval);
    p.subset_size = r.integer<std::size_t>("probe.subset", p.subset_size);
    p.max_lag = r.integer<int>("probe.lags", p.max_lag);
    p.window = r.integer<int>("probe.window", p.window);
    p.history = r.integer<std::size_t>("probe.history", p.history);
    if (p.interval == 0 || p.subset_size == 0 || p.max_lag < 0 || p.window < 0)
      throw ConfigError("invalid probe settings");
  }

  auto& th = cfg.theorem;
  th.mu = r.maybe_real("theorem.mu");
  th.lipschitz = r.maybe_real("theorem.L");
  th.estimate_lipschitz = r.boolean("theorem.estimate_L", th.estimate_lipschitz);
  th.lipschitz_iterations = r.integer<int>("theorem.L_iterations", th.lipschitz_iterations);
  th.sigma2 = r.maybe_real("theorem.sigma2");
  th.estimate_sigma2 = r.boolean("theorem.estimate_sigma2", th.estimate_sigma2);
  th.variance_samples = r.integer<int>("theorem.variance_samples", th.variance_samples);
  th.horizon = r.integer<std::uint64_t>("theorem.T", th.horizon);
  th.f_inf = r.maybe_real("theorem.f_inf");

  cfg.output_dir = r.str("output.dir", cfg.output_dir);

  cfg.sweep.staleness = r.integer_list<int>("sweep.staleness", {});
  cfg.sweep.workers = r.integer_list<int>("sweep.workers", {});
  cfg.sweep.optimizer = r.string_list("sweep.optimizer");
  cfg.sweep.depth = r.integer_list<int>("sweep.depth", {});

  r.reject_unused();
  validate(delay_spec(cfg), cfg.workers);
  return cfg;
}

KeyValueConfig to_key_values(const ExperimentConfig& cfg) {
  KeyValueConfig kv;
  const auto& w = cfg.workload;
  kv.set("workload.kind", w);
  if (w == "dnn" || w == "vae") {
    kv.set("workload.depth", std::to_string(cfg.depth));
    kv.set("workload.width", std::to_string(cfg.width));
  }
  if (w == "vae") kv.set("workload.latent_dim", std::to_string(cfg.latent_dim));
  if (w == "mf") {
    kv.set("mf.rank", std::to_string(cfg.mf.rank));
    kv.set("mf.lambda", format_double(cfg.mf.lambda));
  }
  if (w == "lda") {
    kv.set("lda.topics", std::to_string(cfg.lda.topics));
    kv.set("lda.alpha", format_double(cfg.lda.alpha));
    kv.set("lda.beta", format_double(cfg.lda.beta));
  }
  if (w == "quadratic") {
    const auto& q = cfg.quadratic;
    kv.set("quadratic.dim", std::to_string(q.dim));
    kv.set("quadratic.lambda_min", format_double(q.lambda_min));
    kv.set("quadratic.lambda_max", format_double(q.lambda_max));
    kv.set("quadratic.linear", format_double(q.linear));
    kv.set("quadratic.rotate", q.rotate ? "true" : "false");
  }
  write_data(kv, cfg);
  write_optimizer(kv, cfg.optimizer);

  const auto& d = cfg.delay;
  kv.set("delay.kind", d.kind);
  kv.set("delay.staleness", std::to_string(d.staleness));
  if (d.kind == "geometric") {
    kv.set("delay.straggler_success", format_double(d.straggler_success));
    if (d.nonstraggler_success) kv.set("delay.nonstraggler_success", format_double(*d.nonstraggler_success));
    kv.set("delay.stragglers", std::to_string(d.stragglers));
    kv.set("delay.cap", std::to_string(d.cap));
  }

  kv.set("run.workers", std::to_string(cfg.workers));
  kv.set("run.seeds", join(cfg.seeds));
  kv.set("run.batch_size", std::to_string(cfg.batch_size));
  kv.set("run.budget", std::to_string(cfg.budget));
  kv.set("run.eval_interval", std::to_string(cfg.eval_interval));
  kv.set("run.record_batch_loss", cfg.record_batch_loss ? "true" : "false");

  if (cfg.target) {
    kv.set("target.metric", cfg.target->metric);
    kv.set("target.threshold", format_double(cfg.target->threshold));
    kv.set("target.direction", to_string(cfg.target->direction));
    kv.set("target.sustain", std::to_string(cfg.target->sustain));
    kv.set("target.stop", cfg.stop_at_target ? "true" : "false");
  }

  kv.set("probe.enabled", cfg.probe_enabled ? "true" : "false");
  if (cfg.probe_enabled) {
    kv.set("probe.interval", std::to_string(cfg.probe.interval));
    kv.set("probe.subset", std::to_string(cfg.probe.subset_size));
    kv.set("probe.lags", std::to_string(cfg.probe.max_lag));
    kv.set("probe.window", std::to_string(cfg.probe.window));
    kv.set("probe.history", std::to_string(cfg.probe.history));
  }

  const auto& th = cfg.theorem;
  if (th.mu) kv.set("theorem.mu", format_double(*th.mu));
  if (th.lipschitz) kv.set("theorem.L", format_double(*th.lipschitz));
  if (th.sigma2) kv.set("theorem.sigma2", format_double(*th.sigma2));
  if (th.f_inf) kv.set("theorem.f_inf", format_double(*th.f_inf));
  if (th.estimate_lipschitz) {
    kv.set("theorem.estimate_L", "true");
    kv.set("theorem.L_iterations", std::to_string(th.lipschitz_iterations));
  }
  if (th.estimate_sigma2) {
    kv.set("theorem.estimate_sigma2", "true");
    kv.set("theorem.variance_samples", std::to_string(th.variance_samples));
  }
  if (th.horizon) kv.set("theorem.T", std::to_string(th.horizon));

  kv.set("output.dir", cfg.output_dir);
  if (!cfg.sweep.staleness.empty()) kv.set("sweep.staleness", join(cfg.sweep.staleness));
  if (!cfg.sweep.workers.empty()) kv.set("sweep.workers", join(cfg.sweep.workers));
  if (!cfg.sweep.optimizer.empty()) kv.set("sweep.optimizer", join(cfg.sweep.optimizer));
  if (!cfg.sweep.depth.empty()) kv.set("sweep.depth", join(cfg.sweep.depth));
  return kv;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return parse_experiment(KeyValueConfig::load(path));
}

std::string fingerprint(const ExperimentConfig& cfg) {
  auto kv = to_key_values(cfg);
  std::vector<std::string> drop;
  for (const auto& [k, v] : kv.entries()) {
    if (k == "run.seeds" || k == "output.dir" || k.rfind("sweep.", 0) == 0) drop.push_back(k);
  }
  for (const auto& k : drop) kv.erase(k);
  return hex(fnv1a(kv.serialize()), 16);
}

std::string make_run_id(const std::string& fp, std::uint64_t seed) {
  return hex(fnv1a(fp + "/" + std::to_string(seed)), 12);
}

DelaySpec delay_spec(const ExperimentConfig& cfg) {
  const auto& d = cfg.delay;
  if (d.kind == "uniform") return UniformBounded{d.staleness};
  GeometricStraggler g;
  g.straggler_success = d.straggler_success;
  g.straggler_count = d.stragglers;
  g.cap = d.cap;
  g.nonstraggler_success =
      d.nonstraggler_success
          ? *d.nonstraggler_success
          : match_mean_geometric(d.staleness, d.straggler_success, d.stragglers, cfg.workers).nonstraggler_success;
  return g;
}

std::string workload_label(const ExperimentConfig& cfg) {
  if (cfg.workload == "dnn" || cfg.workload == "vae") return cfg.workload + "-d" + std::to_string(cfg.depth);
  return cfg.workload;
}

}  // namespace stalesim
