#include "stalesim/experiment.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "stalesim/dnn.hpp"
#include "stalesim/lda.hpp"
#include "stalesim/mf.hpp"
#include "stalesim/quadratic.hpp"
#include "stalesim/vae.hpp"

namespace stalesim {

namespace {

std::string data_key(const ExperimentConfig& cfg) {
  std::string key = cfg.workload == "vae" ? "unit:" : "raw:";
  const auto kv = to_key_values(cfg);
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind("data.", 0) == 0) key += k + "=" + v + ";";
  }
  return key;
}

template <typename T, typename Make>
std::shared_ptr<const T> cached(std::mutex& mutex, std::map<std::string, std::shared_ptr<const T>>& store,
                                const std::string& key, Make make) {
  {
    std::lock_guard lock(mutex);
    if (auto it = store.find(key); it != store.end()) return it->second;
  }
  auto value = std::shared_ptr<const T>(make());
  std::lock_guard lock(mutex);
  return store.emplace(key, value).first->second;
}

std::string number(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

int staleness_label(const ExperimentConfig& cfg) { return cfg.delay.staleness; }

}  // namespace

std::shared_ptr<const ClassificationSplit> DatasetCache::classification(const ExperimentConfig& cfg) {
  return cached<ClassificationSplit>(mutex_, classification_, data_key(cfg), [&] {
    auto split = std::make_unique<ClassificationSplit>();
    if (cfg.data.source == "mnist") {
      split->train = load_mnist(resolve_data_path(cfg.data.images), resolve_data_path(cfg.data.labels));
      split->test = load_mnist(resolve_data_path(cfg.data.test_images), resolve_data_path(cfg.data.test_labels));
    } else {
      auto params = cfg.data.clusters;
      params.unit_interval = cfg.workload == "vae";
      *split = make_gaussian_clusters(params, cfg.data.seed);
    }
    return split.release();
  });
}

std::shared_ptr<const RatingMatrix> DatasetCache::ratings(const ExperimentConfig& cfg) {
  return cached<RatingMatrix>(mutex_, ratings_, data_key(cfg), [&] {
    if (cfg.data.source == "movielens") return new RatingMatrix(load_movielens(resolve_data_path(cfg.data.path)));
    return new RatingMatrix(make_low_rank(cfg.data.low_rank, cfg.data.seed).data);
  });
}

std::shared_ptr<const Corpus> DatasetCache::corpus(const ExperimentConfig& cfg) {
  return cached<Corpus>(mutex_, corpora_, data_key(cfg), [&] {
    if (cfg.data.source == "bow")
      return new Corpus(load_bag_of_words(resolve_data_path(cfg.data.path), cfg.data.corpus.vocab));
    return new Corpus(make_lda_corpus(cfg.data.corpus, cfg.data.seed));
  });
}

std::shared_ptr<const Workload> build_workload(const ExperimentConfig& cfg, DatasetCache& cache) {
  const auto& w = cfg.workload;
  if (w == "mlr" || w == "dnn") {
    auto data = cache.classification(cfg);
    NetSpec spec{w == "mlr" ? 0 : cfg.depth, cfg.width, data->train.input_dim(), data->train.num_classes};
    return std::make_shared<DnnWorkload>(spec, data);
  }
  if (w == "vae") {
    auto data = cache.classification(cfg);
    VaeSpec spec{cfg.depth, cfg.width, data->train.input_dim(), cfg.latent_dim};
    return std::make_shared<VaeWorkload>(spec, data);
  }
  if (w == "mf") {
    auto data = cache.ratings(cfg);
    MfSpec spec = cfg.mf;
    spec.rows = data->rows;
    spec.cols = data->cols;
    return std::make_shared<MfWorkload>(spec, data);
  }
  if (w == "lda") return std::make_shared<LdaWorkload>(cfg.lda, cache.corpus(cfg));
  if (w == "quadratic") return std::make_shared<QuadraticWorkload>(cfg.quadratic, cfg.data.seed);
  throw ConfigError("unknown workload '" + w + "'");
}

RunOptions make_run_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  RunOptions o;
  o.sim.workers = cfg.workers;
  o.sim.delay = delay_spec(cfg);
  o.sim.optimizer = cfg.optimizer;
  o.sim.batch_size = cfg.batch_size;
  o.sim.seed = seed;
  o.run_id = make_run_id(fingerprint(cfg), seed);
  o.budget = cfg.budget;
  o.eval_interval = cfg.eval_interval;
  o.target = cfg.target;
  o.stop_at_target = cfg.stop_at_target;
  o.record_batch_loss = cfg.record_batch_loss;
  if (cfg.probe_enabled) o.probe = cfg.probe;
  return o;
}

RunSummary summarize(const ExperimentConfig& cfg, std::uint64_t seed, const RunTrace& trace, const Workload& workload) {
  RunSummary s;
  s.run_id = trace.run_id;
  s.fingerprint = fingerprint(cfg);
  s.workload = workload_label(cfg);
  s.optimizer = optimizer_name(cfg.optimizer);
  s.staleness = staleness_label(cfg);
  s.workers = cfg.workers;
  s.seed = seed;
  if (cfg.target && !trace.diverged) {
    try {
      s.batches_to_target = detect_convergence(trace, *cfg.target);
    } catch (const UnknownMetricError&) {
    }
  }
  s.final_metric = trace.last(workload.metric_name()).value_or(std::numeric_limits<double>::quiet_NaN());
  if (trace.diverged) s.final_metric = std::numeric_limits<double>::quiet_NaN();
  return s;
}

RunOutcome execute_run(const ExperimentConfig& cfg, std::uint64_t seed, DatasetCache& cache) {
  auto workload = build_workload(cfg, cache);
  RunOutcome out;
  out.trace = run_simulation(workload, make_run_options(cfg, seed));
  out.summary = summarize(cfg, seed, out.trace, *workload);
  return out;
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base) {
  const auto& sw = base.sweep;
  const std::vector<int> depths = sw.depth.empty() ? std::vector<int>{base.depth} : sw.depth;
  const std::vector<int> workers = sw.workers.empty() ? std::vector<int>{base.workers} : sw.workers;
  const std::vector<int> stale = sw.staleness.empty() ? std::vector<int>{base.delay.staleness} : sw.staleness;
  std::vector<std::string> optimizers = sw.optimizer;
  if (optimizers.empty()) optimizers.push_back(optimizer_name(base.optimizer));

  std::vector<ExperimentConfig> cells;
  for (int d : depths) {
    for (const auto& opt : optimizers) {
      for (int p : workers) {
        for (int s : stale) {
          ExperimentConfig c = base;
          c.sweep = {};
          c.depth = d;
          c.optimizer = opt == optimizer_name(base.optimizer) ? base.optimizer : default_optimizer(opt);
          c.workers = p;
          c.delay.staleness = s;
          if (!sw.depth.empty() && c.workload != "dnn" && c.workload != "vae")
            throw ConfigError("sweep.depth only applies to dnn and vae workloads");
          if (p < 1) throw ConfigError("sweep.workers entries must be at least 1");
          if (s < 0) throw ConfigError("sweep.staleness entries must be non-negative");
          validate(delay_spec(c), c.workers);
          cells.push_back(std::move(c));
        }
      }
    }
  }
  return cells;
}

std::string sweep_group(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "workload=" << workload_label(cfg) << ";workers=" << cfg.workers
     << ";optimizer=" << optimizer_name(cfg.optimizer);
  return os.str();
}

std::string slowdown_csv_row(const SlowdownRow& row) {
  std::ostringstream os;
  os.precision(10);
  os << row.group << ',' << row.staleness << ',';
  if (row.mean_ratio) {
    os << *row.mean_ratio;
  } else {
    os << "NA";
  }
  os << ',';
  if (row.stddev) {
    os << *row.stddev;
  } else {
    os << "NA";
  }
  os << ',' << row.n << ',' << row.omitted;
  return os.str();
}

std::vector<SlowdownRow> slowdown_rows(const std::vector<std::pair<std::string, RunSummary>>& labelled) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<RunSummary>> groups;
  for (const auto& [g, s] : labelled) {
    if (!groups.count(g)) order.push_back(g);
    groups[g].push_back(s);
  }
  std::vector<SlowdownRow> rows;
  for (const auto& g : order) {
    const auto& runs = groups[g];
    std::vector<int> levels;
    std::map<int, std::size_t> count;
    for (const auto& r : runs) {
      if (!count.count(r.staleness)) levels.push_back(r.staleness);
      ++count[r.staleness];
    }
    std::optional<SlowdownTable> table;
    try {
      table = normalize_slowdown(runs);
    } catch (const MissingBaselineError&) {
    }
    for (int s : levels) {
      SlowdownRow row;
      row.group = g;
      row.staleness = s;
      if (table && table->ratios.count(s)) {
        const auto& cell = table->ratios.at(s);
        row.mean_ratio = cell.mean_ratio;
        row.stddev = cell.stddev;
        row.n = cell.n;
        row.omitted = cell.omitted;
      } else {
        row.n = 0;
        row.omitted = count[s];
      }
      rows.push_back(row);
    }
  }
  return rows;
}

TheoremSetup resolve_theorem(const ExperimentConfig& cfg, DatasetCache& cache) {
  const auto& th = cfg.theorem;
  if (!th.mu) throw ConfigError("theorem.mu is required");
  if (!th.lipschitz && !th.estimate_lipschitz)
    throw ConfigError("theorem.L is missing and theorem.estimate_L is disabled");
  if (!th.sigma2 && !th.estimate_sigma2)
    throw ConfigError("theorem.sigma2 is missing and theorem.estimate_sigma2 is disabled");
  if (!std::holds_alternative<Sgd>(cfg.optimizer)) throw ConfigError("theorem verification runs plain SGD steps");

  TheoremSetup setup;
  setup.horizon = th.horizon ? th.horizon : cfg.budget / static_cast<std::uint64_t>(cfg.workers);
  if (setup.horizon < 2) throw ConfigError("theorem horizon T must be at least 2 (set theorem.T or run.budget)");

  auto workload = build_workload(cfg, cache);
  if (!workload->has_objective()) throw ConfigError("workload " + workload->kind() + " has no probe objective");
  const std::size_t batch = cfg.batch_size ? cfg.batch_size : workload->default_batch_size(cfg.workers);

  double f0_sum = 0.0;
  double l_est = 0.0;
  double sigma_est = 0.0;
  for (auto seed : cfg.seeds) {
    Rng init_rng = make_rng(seed, Stream::Init);
    const ParamVector x0 = workload->init_params(init_rng);
    Rng probe_rng = make_rng(seed, Stream::Probe);
    const auto subset = choose_fixed_subset(workload->num_units(), cfg.probe.subset_size, probe_rng);
    f0_sum += workload->objective(x0, subset, nullptr);
    Rng est_rng = make_rng(seed, Stream::Probe, 1);
    if (!th.lipschitz)
      l_est = std::max(l_est, estimate_lipschitz(*workload, x0, subset, th.lipschitz_iterations, est_rng));
    if (!th.sigma2)
      sigma_est = std::max(sigma_est,
                           estimate_gradient_variance(*workload, x0, subset, batch, th.variance_samples, est_rng));
  }

  auto& p = setup.params;
  p.mu = *th.mu;
  p.lipschitz = th.lipschitz ? *th.lipschitz : l_est;
  p.sigma2 = th.sigma2 ? *th.sigma2 : sigma_est;
  p.staleness = std::max(cfg.delay.staleness, 1);
  p.f0 = f0_sum / static_cast<double>(cfg.seeds.size());
  if (th.f_inf) {
    p.f_inf = *th.f_inf;
  } else if (const auto* q = dynamic_cast<const QuadraticWorkload*>(workload.get())) {
    p.f_inf = q->infimum();
  } else {
    p.f_inf = 0.0;
  }
  p.horizon = setup.horizon;
  p.validate();
  return setup;
}

VerifyOutcome run_verification(const ExperimentConfig& cfg, DatasetCache& cache) {
  VerifyOutcome out;
  out.setup = resolve_theorem(cfg, cache);
  const auto p = out.setup.params;
  auto workload = build_workload(cfg, cache);
  for (auto seed : cfg.seeds) {
    RunOptions o = make_run_options(cfg, seed);
    o.budget = out.setup.horizon * static_cast<std::uint64_t>(cfg.workers);
    o.target.reset();
    o.probe = cfg.probe;
    if (o.probe->window == 0) o.probe->window = p.staleness;
    o.sim.stepsize = [p](std::uint64_t k) { return theorem_stepsize(k, p.mu, p.staleness, p.lipschitz); };
    out.traces.push_back(run_simulation(workload, o));
  }
  out.report = verify_bound(out.traces, p);
  return out;
}

std::vector<CoherenceRow> coherence_rows(const std::vector<RunTrace>& traces, int workers, int max_lag) {
  struct Acc {
    double cos = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::uint64_t, int>, Acc> cosines;
  std::map<std::uint64_t, Acc> mus;
  for (const auto& t : traces) {
    for (const auto& e : t.events) {
      const std::uint64_t iter = e.batches / static_cast<std::uint64_t>(workers);
      if (e.metric == kProbeMuMetric) {
        mus[iter].cos += e.value;
        ++mus[iter].n;
        continue;
      }
      for (int lag = 1; lag <= max_lag; ++lag) {
        if (e.metric == probe_cosine_metric(lag)) {
          auto& a = cosines[{iter, lag}];
          a.cos += e.value;
          ++a.n;
        }
      }
    }
  }
  std::vector<CoherenceRow> rows;
  for (const auto& [key, acc] : cosines) {
    CoherenceRow r;
    r.iter = key.first;
    r.lag = key.second;
    r.cosine = acc.cos / static_cast<double>(acc.n);
    const auto it = mus.find(key.first);
    r.mu = it == mus.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.cos / static_cast<double>(it->second.n);
    rows.push_back(r);
  }
  return rows;
}

void write_trace_file(const std::filesystem::path& path, const RunTrace& trace,
                      const std::optional<VerificationReport>& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingFileError("cannot write " + path.string());
  write_trace_jsonl(out, trace);
  if (report) {
    nlohmann::ordered_json j;
    j["run_id"] = trace.run_id;
    j["kind"] = "verification";
    j["report"] = report->to_key_values();
    out << j.dump() << '\n';
  }
}

void append_summaries(const std::filesystem::path& path, const std::vector<RunSummary>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw MissingFileError("cannot write " + path.string());
  if (fresh) out << kSummaryHeader << '\n';
  for (const auto& r : rows) out << summary_csv_row(r) << '\n';
}

namespace {

std::filesystem::path prepare_outdir(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Maps exceptions to exit codes; `body` returns the success code.
template <typename Body>
int guarded(std::ostream& err, Body body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
  } catch (const FormatError& e) {
    err << "config error: " << e.what() << '\n';
  } catch (const MissingFileError& e) {
    err << "config error: " << e.what() << '\n';
  } catch (const InfeasibleMeanError& e) {
    err << "config error: " << e.what() << '\n';
  } catch (const UnsupportedOptimizerError& e) {
    err << "config error: " << e.what() << '\n';
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitConfig;
}

}  // namespace

int cmd_run(const std::filesystem::path& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_experiment(config);
    const auto dir = prepare_outdir(cfg);
    DatasetCache cache;
    bool diverged = false;
    std::vector<RunSummary> rows;
    for (auto seed : cfg.seeds) {
      auto r = execute_run(cfg, seed, cache);
      write_trace_file(dir / (r.trace.run_id + ".jsonl"), r.trace);
      diverged = diverged || r.trace.diverged;
      out << r.trace.run_id << " seed=" << seed << " batches_to_target="
          << (r.summary.batches_to_target ? std::to_string(*r.summary.batches_to_target) : "NA")
          << " final=" << number(r.summary.final_metric) << (r.trace.diverged ? " diverged" : "") << '\n';
      rows.push_back(r.summary);
    }
    append_summaries(dir / "summary.csv", rows);
    if (diverged) {
      err << "numerical divergence in at least one run\n";
      return static_cast<int>(kExitDiverged);
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_sweep(const std::filesystem::path& config, int jobs, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto base = load_experiment(config);
    const auto cells = expand_sweep(base);
    const auto dir = prepare_outdir(base);

    struct Task {
      std::size_t cell;
      std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (auto seed : cells[c].seeds) tasks.push_back({c, seed});
    }
    std::vector<std::optional<RunSummary>> results(tasks.size());
    std::vector<std::string> failures(tasks.size());
    DatasetCache cache;
    std::atomic<std::size_t> next{0};
    std::mutex io;

    auto worker = [&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        const auto& t = tasks[i];
        try {
          auto r = execute_run(cells[t.cell], t.seed, cache);
          write_trace_file(dir / (r.trace.run_id + ".jsonl"), r.trace);
          std::lock_guard lock(io);
          out << sweep_group(cells[t.cell]) << " s=" << cells[t.cell].delay.staleness << " seed=" << t.seed
              << " batches_to_target="
              << (r.summary.batches_to_target ? std::to_string(*r.summary.batches_to_target) : "NA")
              << (r.trace.diverged ? " diverged" : "") << '\n';
          results[i] = std::move(r.summary);
        } catch (const std::exception& e) {
          failures[i] = e.what();
        }
      }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    std::vector<std::thread> pool;
    for (int j = 1; j < n_threads; ++j) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (!failures[i].empty())
        throw ConfigError("sweep cell " + sweep_group(cells[tasks[i].cell]) + " failed: " + failures[i]);
    }

    std::vector<RunSummary> rows;
    std::vector<std::pair<std::string, RunSummary>> labelled;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      rows.push_back(*results[i]);
      labelled.emplace_back(sweep_group(cells[tasks[i].cell]), *results[i]);
    }
    append_summaries(dir / "summary.csv", rows);

    std::ofstream csv(dir / "slowdown.csv", std::ios::binary | std::ios::trunc);
    csv << kSlowdownHeader << '\n';
    for (const auto& row : slowdown_rows(labelled)) csv << slowdown_csv_row(row) << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_verify_theorem(const std::filesystem::path& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_experiment(config);
    const auto dir = prepare_outdir(cfg);
    DatasetCache cache;
    const auto v = run_verification(cfg, cache);
    for (const auto& t : v.traces) write_trace_file(dir / (t.run_id + ".jsonl"), t, v.report);
    const auto& p = v.setup.params;
    out << "mu=" << p.mu << "\nL=" << p.lipschitz << "\nsigma2=" << p.sigma2 << "\ns=" << p.staleness
        << "\nT=" << p.horizon << "\nF0=" << p.f0 << "\nF_inf=" << p.f_inf << '\n'
        << v.report.to_key_values();
    switch (v.report.verdict) {
      case Verdict::Pass:
        return static_cast<int>(kExitOk);
      case Verdict::Inconclusive:
        return static_cast<int>(kExitInconclusive);
      case Verdict::Fail:
        break;
    }
    return static_cast<int>(kExitFail);
  });
}

int cmd_probe(const std::filesystem::path& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto cfg = load_experiment(config);
    cfg.probe_enabled = true;
    const auto dir = prepare_outdir(cfg);
    DatasetCache cache;
    std::vector<RunTrace> traces;
    bool diverged = false;
    std::vector<RunSummary> rows;
    for (auto seed : cfg.seeds) {
      auto r = execute_run(cfg, seed, cache);
      write_trace_file(dir / (r.trace.run_id + ".jsonl"), r.trace);
      diverged = diverged || r.trace.diverged;
      rows.push_back(r.summary);
      traces.push_back(std::move(r.trace));
    }
    append_summaries(dir / "summary.csv", rows);
    std::ofstream csv(dir / "coherence.csv", std::ios::binary | std::ios::trunc);
    csv << kCoherenceHeader << '\n';
    csv.precision(17);
    const auto coh = coherence_rows(traces, cfg.workers, cfg.probe.max_lag);
    for (const auto& r : coh) csv << r.iter << ',' << r.lag << ',' << r.cosine << ',' << number(r.mu) << '\n';
    out << "wrote " << coh.size() << " coherence rows to " << (dir / "coherence.csv").string() << '\n';
    return static_cast<int>(diverged ? kExitDiverged : kExitOk);
  });
}

int cmd_report(const std::filesystem::path& outdir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto path = outdir / "summary.csv";
    std::ifstream in(path);
    if (!in) throw MissingFileError("no summary.csv in " + outdir.string());
    const auto rows = read_summary_csv(in);

    struct Key {
      std::string group;
      int staleness;
      auto operator<=>(const Key&) const = default;
    };
    std::map<Key, std::vector<RunSummary>> cells;
    std::vector<std::pair<std::string, RunSummary>> labelled;
    for (const auto& r : rows) {
      const std::string g = "workload=" + r.workload + ";workers=" + std::to_string(r.workers) +
                            ";optimizer=" + r.optimizer;
      cells[{g, r.staleness}].push_back(r);
      labelled.emplace_back(g, r);
    }
    out << "group,staleness,runs,reached,mean_batches,std_batches\n";
    for (const auto& [key, runs] : cells) {
      const auto agg = aggregate_seeds(runs);
      out << key.group << ',' << key.staleness << ',' << runs.size() << ',' << agg.n << ',' << number(agg.mean) << ','
          << (agg.n ? number(agg.stddev) : "NA") << '\n';
    }
    out << '\n' << kSlowdownHeader << '\n';
    for (const auto& row : slowdown_rows(labelled)) out << slowdown_csv_row(row) << '\n';
    return static_cast<int>(kExitOk);
  });
}

}  // namespace stalesim
