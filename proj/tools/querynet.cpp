#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "querynet/cli/config.hpp"
#include "querynet/driver/report_io.hpp"
#include "querynet/models/checkpoint.hpp"
#include "querynet/remote/client.hpp"
#include "querynet/remote/server.hpp"

namespace fs = std::filesystem;
using namespace querynet;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kOracle = 4, kReport = 5 };

int fail(Exit code, const std::string& category, const std::string& message) {
  std::cerr << nlohmann::json{{"error", category}, {"message", message}}.dump() << '\n';
  return code;
}

int train_victim(const std::string& config_path, const fs::path& out) {
  const auto config = cli::load_config(config_path);
  const auto data = cli::load_dataset(config.train_data);
  const auto trained = models::train_victim(data, config.victim_seed, config.victim_training);
  models::save_victim(out, trained.model);
  const nlohmann::json sidecar = {{"held_out_accuracy", trained.held_out_accuracy},
                                  {"train_samples", trained.train_samples},
                                  {"held_out_samples", trained.held_out_samples},
                                  {"seed", config.victim_seed},
                                  {"config_hash", cli::config_hash(config)}};
  std::ofstream(out.string() + ".json") << sidecar.dump(2) << '\n';
  std::cout << "held-out accuracy " << trained.held_out_accuracy << " -> " << out.string() << '\n';
  return kOk;
}

int serve_victim(const fs::path& checkpoint, const remote::ServerOptions& options) {
  const auto victim = models::load_victim(checkpoint);
  remote::VictimServer server(victim, options);
  std::cout << "serving " << checkpoint.string() << " on " << options.host << ':' << options.port << std::endl;
  server.run();
  return kOk;
}

int attack(const std::string& config_path, const fs::path& out_dir, int jobs) {
  const auto config = cli::load_config(config_path);
  if (config.victim_checkpoint.empty() == config.victim_endpoint.empty()) {
    throw cli::ConfigError({"victim: attack needs exactly one of checkpoint or endpoint"});
  }
  const auto inputs = cli::attack_set(config);
  std::optional<models::VictimModel> local;
  if (!config.victim_checkpoint.empty()) local = models::load_victim(config.victim_checkpoint);

  const std::string hash = cli::config_hash(config);
  const std::string variant = cli::variant_name(config);
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "config.json") << cli::canonical_json(config) << '\n';

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      const std::uint64_t seed = config.seeds[i];
      try {
        std::unique_ptr<core::VictimOracle> oracle;
        if (local) {
          oracle = std::make_unique<core::LocalOracle>(*local);
        } else {
          oracle = std::make_unique<remote::RemoteOracle>(config.victim_endpoint);
        }
        const auto result = driver::run_attack(inputs, *oracle, cli::attack_config(config, seed));
        driver::write_run(out_dir / ("seed_" + std::to_string(seed)), result,
                          {variant, hash, seed, config.budget});
        std::lock_guard lock(log_mutex);
        const auto& r = result.report;
        std::cout << variant << " seed " << seed << ": success " << r.successes << '/' << r.outcomes.size()
                  << " A.Q. " << (r.mean_queries ? std::to_string(*r.mean_queries) : "n/a") << " M.Q. "
                  << (r.median_queries ? std::to_string(*r.median_queries) : "n/a") << '\n';
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return kOk;
}

struct Stats {
  double mean = 0.0;
  std::optional<double> stdev;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return s;
}

int report(const std::vector<std::string>& run_dirs, const std::string& csv_path) {
  struct Row {
    std::string variant, hash;
    std::size_t seeds = 0;
    Stats acc, aq, mq;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    std::vector<driver::ReportSummary> summaries;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto file = entry.path() / "report.json";
      if (entry.is_directory() && fs::exists(file)) summaries.push_back(driver::read_report(file));
    }
    if (fs::exists(fs::path(dir) / "report.json")) summaries.push_back(driver::read_report(fs::path(dir) / "report.json"));
    if (summaries.empty()) throw driver::ReportParseError(dir + ": no report.json found");
    std::vector<double> acc, aq, mq;
    for (const auto& s : summaries) {
      if (s.meta.config_hash != summaries.front().meta.config_hash) {
        throw cli::ConfigError({dir + ": reports from different configs (" + summaries.front().meta.config_hash +
                                " vs " + s.meta.config_hash + ")"});
      }
      acc.push_back(s.accuracy);
      if (s.mean_queries) aq.push_back(*s.mean_queries);
      if (s.median_queries) mq.push_back(*s.median_queries);
    }
    rows.push_back({summaries.front().meta.variant, summaries.front().meta.config_hash, summaries.size(), stats(acc),
                    stats(aq), stats(mq)});
  }
  const bool spread = std::any_of(rows.begin(), rows.end(), [](const Row& r) { return r.seeds > 1; });
  auto cell = [](const Stats& s) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(3) << s.mean;
    return o.str();
  };
  auto sd = [](const Stats& s) {
    if (!s.stdev) return std::string();
    std::ostringstream o;
    o << std::fixed << std::setprecision(3) << *s.stdev;
    return o.str();
  };
  std::ostringstream csv;
  csv << "variant,config_hash,seeds,acc,aq,mq";
  if (spread) csv << ",acc_stdev,aq_stdev,mq_stdev";
  csv << '\n';
  for (const auto& r : rows) {
    csv << r.variant << ',' << r.hash << ',' << r.seeds << ',' << cell(r.acc) << ',' << cell(r.aq) << ','
        << cell(r.mq);
    if (spread) csv << ',' << sd(r.acc) << ',' << sd(r.aq) << ',' << sd(r.mq);
    csv << '\n';
  }
  if (!csv_path.empty()) std::ofstream(csv_path) << csv.str();

  std::cout << std::left << std::setw(28) << "variant" << std::setw(7) << "seeds" << std::setw(20) << "Acc."
            << std::setw(20) << "A.Q." << "M.Q." << '\n';
  for (const auto& r : rows) {
    auto both = [&](const Stats& s) { return spread && s.stdev ? cell(s) + " ± " + sd(s) : cell(s); };
    std::cout << std::setw(28) << r.variant << std::setw(7) << r.seeds << std::setw(20) << both(r.acc)
              << std::setw(20) << both(r.aq) << both(r.mq) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box query attacks with multi-identity surrogates"};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, csv_path;
  std::vector<std::string> run_dirs;
  int jobs = 1;
  remote::ServerOptions server_options;
  server_options.port = 8080;

  auto* train = app.add_subcommand("train-victim", "Train a victim and write its checkpoint");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out, "Checkpoint path")->required();

  auto* serve = app.add_subcommand("serve-victim", "Serve a victim over HTTP");
  serve->add_option("--checkpoint", checkpoint, "Victim checkpoint")->required();
  serve->add_option("--host", server_options.host, "Bind address");
  serve->add_option("--port", server_options.port, "Port (0 picks a free one)");
  serve->add_option("--max-batch", server_options.max_batch, "Largest batch accepted");

  auto* atk = app.add_subcommand("attack", "Run the configured attack for every seed");
  atk->add_option("--config", config_path, "Run config (JSON)")->required();
  atk->add_option("--out", out, "Output directory")->required();
  atk->add_option("--jobs", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "Compare attack output directories");
  rep->add_option("dirs", run_dirs, "Directories written by attack")->required();
  rep->add_option("--csv", csv_path, "Also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return train_victim(config_path, out);
    if (*serve) return serve_victim(checkpoint, server_options);
    if (*atk) return attack(config_path, out, jobs);
    if (*rep) return report(run_dirs, csv_path);
  } catch (const cli::ConfigError& e) {
    return fail(kConfig, "config", e.what());
  } catch (const data::DataError& e) {
    return fail(kData, "data", e.what());
  } catch (const models::CheckpointError& e) {
    return fail(kData, "checkpoint", e.what());
  } catch (const models::TrainingDiverged& e) {
    return fail(kData, "training_diverged", e.what());
  } catch (const core::OracleError& e) {
    return fail(kOracle, "oracle", e.what());
  } catch (const driver::ReportParseError& e) {
    return fail(kReport, "report_parse", e.what());
  } catch (const std::exception& e) {
    return fail(kFailure, "internal", e.what());
  }
  return kFailure;
}
