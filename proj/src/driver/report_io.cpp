#include "querynet/driver/report_io.hpp"

#include <fstream>
#include <ostream>

#include "json.hpp"

namespace querynet::driver {
namespace {

using nlohmann::json;

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json selection_json(const std::map<core::AttackerId, std::size_t>& counts) {
  json out = json::object();
  for (const auto& [id, count] : counts) out[std::to_string(id)] = count;
  return out;
}

}  // namespace

std::string report_json(const RunReport& report, const ReportMeta& meta) {
  json curve = json::array();
  for (const auto& p : report.curve) curve.push_back({p.iteration, p.success_rate});
  json consistency = json::array();
  for (const auto& c : report.consistency) {
    consistency.push_back({{"iteration", c.iteration}, {"current", c.consistency}, {"bootstrap", c.bootstrap}});
  }
  json selection = json::array();
  for (const auto& s : report.selection) selection.push_back(selection_json(s));
  const json doc = {
      {"variant", meta.variant},
      {"config_hash", meta.config_hash},
      {"seed", meta.seed},
      {"budget", meta.budget},
      {"samples", report.samples},
      {"excluded", report.excluded},
      {"attacked", report.outcomes.size()},
      {"successes", report.successes},
      {"accuracy", report.accuracy},
      {"mean_queries", optional_json(report.mean_queries)},
      {"median_queries", optional_json(report.median_queries)},
      {"total_queries", report.total_queries},
      {"iterations", report.iterations},
      {"refits", report.refits},
      {"phase3_surrogate_calls", report.phase3_surrogate_calls},
      {"phases", report.phases},
      {"success_curve", curve},
      {"selection", selection},
      {"consistency", consistency},
  };
  return doc.dump(2);
}

void write_samples_csv(std::ostream& out, const RunReport& report) {
  out << "id,success,queries,success_iteration\n";
  for (const auto& o : report.outcomes) {
    out << o.id << ',' << (o.success ? 1 : 0) << ',' << o.queries << ',';
    if (o.success_iteration) out << *o.success_iteration;
    out << '\n';
  }
}

void write_curve_csv(std::ostream& out, const RunReport& report) {
  out << "iteration,success_rate\n";
  for (const auto& p : report.curve) out << p.iteration << ',' << p.success_rate << '\n';
}

std::string trace_line(const core::TraceRecord& record) {
  json doc = {
      {"iteration", record.iteration},
      {"phase", core::phase_index(record.phase_before)},
      {"next_phase", core::phase_index(record.phase_after)},
      {"active", record.active},
      {"selected", selection_json(record.selected)},
      {"improved", selection_json(record.improved)},
      {"weights", record.weights},
      {"squareplus_leads", record.squareplus_leads},
      {"square_leads", record.square_leads},
      {"surrogate_calls", record.surrogate_calls},
      {"fit_batches", record.fit_batches},
  };
  if (record.consistency) doc["consistency"] = *record.consistency;
  if (record.bootstrap_consistency) doc["bootstrap_consistency"] = *record.bootstrap_consistency;
  return doc.dump();
}

void write_run(const std::filesystem::path& dir, const AttackResult& result, const ReportMeta& meta) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("report.json");
    out << report_json(result.report, meta) << '\n';
  }
  {
    auto out = open("samples.csv");
    write_samples_csv(out, result.report);
  }
  {
    auto out = open("curve.csv");
    write_curve_csv(out, result.report);
  }
  auto out = open("trace.jsonl");
  for (const auto& record : result.trace) out << trace_line(record) << '\n';
}

ReportSummary read_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ReportParseError(file.string() + ": cannot open");
  json doc;
  try {
    doc = json::parse(in);
    ReportSummary s;
    s.meta.variant = doc.at("variant").get<std::string>();
    s.meta.config_hash = doc.at("config_hash").get<std::string>();
    s.meta.seed = doc.at("seed").get<std::uint64_t>();
    s.meta.budget = doc.at("budget").get<std::size_t>();
    s.accuracy = doc.at("accuracy").get<double>();
    if (!doc.at("mean_queries").is_null()) s.mean_queries = doc["mean_queries"].get<double>();
    if (!doc.at("median_queries").is_null()) s.median_queries = doc["median_queries"].get<double>();
    s.successes = doc.at("successes").get<std::size_t>();
    s.attacked = doc.at("attacked").get<std::size_t>();
    return s;
  } catch (const json::exception& e) {
    throw ReportParseError(file.string() + ": " + e.what());
  }
}

}  // namespace querynet::driver
