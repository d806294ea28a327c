// Command-line front end: data generation, training, evaluation, FLOPs
// reports, gradient checks, (p, L) sweeps and the property self-test.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mstr/checkpoint.hpp"
#include "mstr/complexity.hpp"
#include "mstr/config.hpp"
#include "mstr/data.hpp"
#include "mstr/errors.hpp"
#include "mstr/experiment.hpp"
#include "mstr/gradcheck.hpp"
#include "mstr/selftest.hpp"
#include "mstr/trainer.hpp"

namespace fs = std::filesystem;
using namespace mstr;

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kRuntimeFailure = 2;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path checkpoint_name(std::uint64_t seed) {
  return "checkpoint_seed" + std::to_string(seed) + ".bin";
}

std::string metrics_report(const EvalMetrics& m, Split split) {
  std::ostringstream out;
  out << "split = " << to_string(split) << '\n';
  out << "samples = " << m.total() << '\n';
  out << "wa = " << fixed(m.wa) << '\n';
  out << "ua = " << fixed(m.ua) << '\n';
  out << "wf1 = " << fixed(m.wf1) << '\n';
  out << "zero_support_classes = ";
  for (std::size_t i = 0; i < m.zero_support_classes.size(); ++i)
    out << (i ? "," : "") << m.zero_support_classes[i];
  out << '\n';
  return out.str();
}

std::string confusion_csv(const EvalMetrics& m) {
  std::ostringstream out;
  out << "true\\pred";
  for (std::size_t c = 0; c < m.confusion.size(); ++c) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < m.confusion.size(); ++r) {
    out << r;
    for (auto v : m.confusion[r]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

// Writes history.csv, one checkpoint per seed and summary.csv into `out`.
void write_run(const fs::path& out, const MstrConfig& model, const SyntheticRunResult& run) {
  write_text(out / "history.csv", history_csv(run.history));
  std::ostringstream summary;
  summary << "seed,best_epoch,best_val_wa,test_wa,test_ua,test_wf1\n";
  for (const auto& s : run.seeds) {
    write_checkpoint(out / checkpoint_name(s.seed), model, s.best_params);
    summary << s.seed << ',' << s.best_epoch << ',' << fixed(s.best_val_wa) << ','
            << fixed(s.test.wa) << ',' << fixed(s.test.ua) << ',' << fixed(s.test.wf1) << '\n';
  }
  write_text(out / "summary.csv", summary.str());
}

void print_epoch(const HistoryRow& r) {
  std::printf("seed %llu epoch %3zu  loss %.4f  val_wa %.4f\n",
              static_cast<unsigned long long>(r.seed), r.epoch, r.train_loss, r.val_wa);
  std::fflush(stdout);
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  const auto ds = generate_synthetic_dataset(cfg.data_spec(), cfg.seed, cfg.model.p, cfg.model.levels);
  write_dataset(out, ds);
  std::printf("wrote %zu train, %zu val, %zu test samples to %s\n", ds.train.size(),
              ds.val.size(), ds.test.size(), out.string().c_str());
  return kOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& out) {
  const MstrConfig model = cfg.model_config();
  model.validate();
  cfg.train_config().validate();
  const auto ds = load_dataset(cfg.data_dir, model.p, model.variant == Variant::kMstr ? model.levels : 0);
  const auto result = train(model, cfg.train_config(), ds, print_epoch);
  SyntheticRunResult run{result.history, {}};
  for (const auto& r : result.runs) {
    EvalMetrics test;
    if (!ds.test.empty()) test = evaluate(r.best_params, model, ds.test, model.num_classes);
    run.seeds.push_back({r.seed, r.best_epoch, r.best_val_wa, r.best_params, std::move(test)});
  }
  write_run(out, model, run);
  for (const auto& s : run.seeds) {
    std::printf("seed %llu: best epoch %zu, val WA %.4f, test WA %.4f -> %s\n",
                static_cast<unsigned long long>(s.seed), s.best_epoch, s.best_val_wa, s.test.wa,
                (out / checkpoint_name(s.seed)).string().c_str());
  }
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& out) {
  if (cfg.checkpoint.empty()) {
    throw ConfigError("config key 'checkpoint' must name a checkpoint file for eval");
  }
  if (!fs::exists(cfg.checkpoint)) {
    throw std::runtime_error("checkpoint " + cfg.checkpoint + " does not exist");
  }
  const auto ckpt = read_checkpoint(cfg.checkpoint);
  const auto ds = load_dataset(cfg.data_dir, ckpt.config.p,
                               ckpt.config.variant == Variant::kMstr ? ckpt.config.levels : 0);
  const auto m = evaluate(ckpt, ds, cfg.split);
  const auto report = metrics_report(m, cfg.split);
  const auto confusion = confusion_csv(m);
  write_text(out / "metrics.txt", report);
  write_text(out / "confusion.csv", confusion);
  std::cout << report << "confusion (rows true, columns predicted)\n" << confusion;
  return kOk;
}

int cmd_flops(const RunConfig& cfg, const fs::path& out) {
  const auto& m = cfg.model;
  if (cfg.flops_lengths.empty()) throw ConfigError("config key 'flops_lengths' is empty");
  // Attention totals do not depend on the head count, so count with one head.
  std::vector<FlopsReport> rows;
  std::string slopes;
  if (cfg.flops_lengths.size() >= 2) {
    const auto s = scaling_report(cfg.flops_lengths, m.model_dim, m.p, m.levels);
    rows = s.rows;
    slopes = "log-log slope of counted MACs: vanilla " + fixed(s.vtr_slope, 4) + ", mstr " +
             fixed(s.mstr_slope, 4) + "\n";
  } else {
    rows.push_back(flops_report(cfg.flops_lengths.front(), m.model_dim, m.p, m.levels));
  }
  const auto table = flops_table(rows) + slopes;
  write_text(out / "flops.csv", flops_csv(rows));
  write_text(out / "flops.txt", table);
  std::cout << table;
  return kOk;
}

int cmd_gradcheck(const RunConfig& cfg, const fs::path& out) {
  const auto results = run_gradient_suite(cfg.seed);
  const auto table = gradcheck_table(results);
  write_text(out / "gradcheck.txt", table);
  std::cout << table;
  const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  return ok ? kOk : kValidationFailure;
}

// Each cell trains one model per seed, each on its own dataset drawn from that seed.
int cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  std::ostringstream csv;
  csv << "p,L,seeds,median_test_wa,mean_test_wa,median_test_ua,median_test_wf1\n";
  for (const auto p : cfg.sweep_p) {
    for (const auto L : cfg.sweep_levels) {
      RunConfig cell = cfg;
      cell.model.variant = Variant::kMstr;
      cell.model.p = p;
      cell.model.levels = L;
      const fs::path dir = out / ("p" + std::to_string(p) + "_L" + std::to_string(L));
      fs::create_directories(dir);
      write_text(dir / "config.txt", cell.dump());
      const auto run = run_synthetic_seeds(cell);
      write_run(dir, cell.model_config(), run);
      std::vector<double> wa, ua, wf1;
      for (const auto& s : run.seeds) {
        wa.push_back(s.test.wa);
        ua.push_back(s.test.ua);
        wf1.push_back(s.test.wf1);
      }
      const double mean = std::accumulate(wa.begin(), wa.end(), 0.0) / static_cast<double>(wa.size());
      csv << p << ',' << L << ',' << run.seeds.size() << ',' << fixed(median(wa)) << ','
          << fixed(mean) << ',' << fixed(median(ua)) << ',' << fixed(median(wf1)) << '\n';
      std::printf("p=%zu L=%zu  median test WA %.4f\n", p, L, median(wa));
      std::fflush(stdout);
    }
  }
  write_text(out / "sweep.csv", csv.str());
  return kOk;
}

int cmd_selftest(const RunConfig&, const fs::path& out) {
  const auto results = run_property_suite(out / "selftest_scratch");
  const auto table = property_table(results);
  write_text(out / "selftest.txt", table);
  std::cout << table;
  const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  return ok ? kOk : kValidationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale transformer toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "mstr_out";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "Flat key=value config file");
  app.add_option("--set", overrides, "Override one config key (key=value), repeatable")
      ->allow_extra_args(false);
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the 'seed' key)");

  using Command = int (*)(const RunConfig&, const fs::path&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"gen-data", "Generate a synthetic dataset directory", cmd_gen_data},
      {"train", "Train one model per seed on data_dir", cmd_train},
      {"eval", "Evaluate a checkpoint on one split of data_dir", cmd_eval},
      {"flops", "Analytic and counted attention cost table", cmd_flops},
      {"gradcheck", "Finite-difference check of every differentiable op", cmd_gradcheck},
      {"sweep", "Train over the sweep_p x sweep_levels grid", cmd_sweep},
      {"selftest", "Run the property suite", cmd_selftest},
  };
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationFailure;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) {
        std::cerr << "error: config file " << config_path << " does not exist\n";
        return kRuntimeFailure;
      }
      cfg.load_file(config_path);
    }
    for (const auto& o : overrides) cfg.apply_override(o);
    if (seed_opt->count() > 0) cfg.seed = seed;

    const fs::path out = out_dir;
    fs::create_directories(out);
    for (const auto& [name, help, fn] : commands) {
      if (app.got_subcommand(name)) {
        write_text(out / "config.txt", cfg.dump());
        return fn(cfg, out);
      }
    }
    return kValidationFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}
