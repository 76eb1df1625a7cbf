#include "querynet/cli/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace querynet::cli {
namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& lines) {
  std::string out = "invalid config:";
  for (const auto& l : lines) out += "\n  " + l;
  return out;
}

/// Walks one JSON object, collecting problems instead of throwing.
class Section {
 public:
  Section(const json& node, std::string path, std::vector<std::string>& problems)
      : node_(node), path_(std::move(path)), problems_(problems) {
    if (!node_.is_object()) problems_.push_back(path_ + ": expected an object");
  }

  /// Reports keys that no reader asked for.
  ~Section() {
    if (!node_.is_object()) return;
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) problems_.push_back(at(it.key()) + ": unknown key");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_.is_object() || !node_.contains(key)) return;
    const json& v = node_[key];
    if (!matches<T>(v)) {
      problems_.push_back(at(key) + ": expected " + expected<T>());
      return;
    }
    out = v.get<T>();
  }

  /// Sub-object, or an empty object when absent.
  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    if (!node_.is_object() || !node_.contains(key)) return Section(empty, at(key), problems_);
    return Section(node_[key], at(key), problems_);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) problems_.push_back(at(key) + ": " + message);
  }

 private:
  template <typename T>
  static bool matches(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v.is_string();
    } else if constexpr (std::is_floating_point_v<T>) {
      return v.is_number();
    } else if constexpr (std::is_unsigned_v<T>) {
      return v.is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
      return v.is_number_integer();
    } else {
      if (!v.is_array()) return false;
      using E = typename T::value_type;
      return std::all_of(v.begin(), v.end(), [](const json& e) { return matches<E>(e); });
    }
  }

  template <typename T>
  static std::string expected() {
    if constexpr (std::is_same_v<T, bool>) {
      return "a boolean";
    } else if constexpr (std::is_same_v<T, std::string>) {
      return "a string";
    } else if constexpr (std::is_floating_point_v<T>) {
      return "a number";
    } else if constexpr (std::is_unsigned_v<T>) {
      return "a non-negative integer";
    } else if constexpr (std::is_integral_v<T>) {
      return "an integer";
    } else {
      return "an array of " + expected<typename T::value_type>();
    }
  }

  const json& node_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

void read_dataset(Section s, DatasetConfig& d) {
  s.get("kind", d.kind);
  s.require(d.kind == "synth" || d.kind == "idx", "kind", "must be \"synth\" or \"idx\"");
  std::uint64_t seed = d.synth.seed;
  s.get("seed", seed);
  d.synth.seed = seed;
  s.get("classes", d.synth.classes);
  s.get("per_class", d.synth.per_class);
  s.get("size", d.synth.size);
  s.get("noise", d.synth.noise);
  s.get("contrast", d.synth.contrast);
  s.get("background", d.synth.background);
  s.get("images", d.images);
  s.get("labels", d.labels);
  s.get("limit", d.limit);
  if (d.kind == "synth") {
    s.require(d.synth.classes >= 2, "classes", "must be at least 2");
    s.require(d.synth.size >= 8, "size", "must be at least 8");
    s.require(d.synth.per_class >= 1, "per_class", "must be positive");
    s.require(d.synth.noise >= 0.0f, "noise", "must be non-negative");
    s.require(d.synth.contrast > 0.0f, "contrast", "must be positive");
    s.require(d.synth.background >= 0.0f && d.synth.background < 1.0f, "background", "must lie in [0, 1)");
  } else if (d.kind == "idx") {
    s.require(!d.images.empty(), "images", "required for idx datasets");
    s.require(!d.labels.empty(), "labels", "required for idx datasets");
  }
}

json dataset_json(const DatasetConfig& d) {
  return {{"kind", d.kind},
          {"seed", d.synth.seed},
          {"classes", d.synth.classes},
          {"per_class", d.synth.per_class},
          {"size", d.synth.size},
          {"noise", d.synth.noise},
          {"contrast", d.synth.contrast},
          {"background", d.synth.background},
          {"images", d.images},
          {"labels", d.labels},
          {"limit", d.limit}};
}

std::string binding_name(attackers::Binding b) {
  return b == attackers::Binding::kMinDistance ? "min_distance" : "every_point";
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems) : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  RunConfig c;
  std::vector<std::string> problems;
  {
    Section root(doc, "", problems);
    {
      Section data = root.child("data");
      read_dataset(data.child("train"), c.train_data);
      read_dataset(data.child("attack"), c.attack_data);
      data.get("attack_samples", c.attack_samples);
    }
    {
      Section victim = root.child("victim");
      victim.get("checkpoint", c.victim_checkpoint);
      victim.get("endpoint", c.victim_endpoint);
      victim.require(c.victim_checkpoint.empty() || c.victim_endpoint.empty(), "endpoint",
                     "give either a checkpoint or an endpoint, not both");
      Section training = victim.child("training");
      training.get("seed", c.victim_seed);
      training.get("epochs", c.victim_training.epochs);
      training.get("batch_size", c.victim_training.batch_size);
      training.get("learning_rate", c.victim_training.learning_rate);
      training.get("held_out_fraction", c.victim_training.held_out_fraction);
      training.get("min_accuracy", c.victim_training.min_accuracy);
      training.require(c.victim_training.epochs >= 1, "epochs", "must be positive");
      training.require(c.victim_training.batch_size >= 1, "batch_size", "must be positive");
      training.require(c.victim_training.learning_rate > 0.0f, "learning_rate", "must be positive");
      training.require(c.victim_training.held_out_fraction > 0.0 && c.victim_training.held_out_fraction < 1.0,
                       "held_out_fraction", "must lie in (0, 1)");
    }
    {
      Section attack = root.child("attack");
      std::string norm = std::string(data::to_string(c.norm));
      attack.get("norm", norm);
      if (norm == "linf" || norm == "l2") {
        c.norm = data::parse_norm(norm);
      } else {
        attack.require(false, "norm", "must be \"linf\" or \"l2\"");
      }
      attack.get("eps", c.eps);
      attack.get("budget", c.budget);
      attack.get("seeds", c.seeds);
      attack.get("exclude_misclassified", c.exclude_misclassified);
      attack.require(c.eps > 0.0f, "eps", "must be positive");
      attack.require(c.budget >= 1, "budget", "must be at least 1");
      attack.require(!c.seeds.empty(), "seeds", "needs at least one seed");
    }
    {
      Section q = root.child("querynet");
      q.get("surrogates", c.surrogates);
      q.get("layers", c.ensemble.layers);
      q.get("weight_lr", c.ensemble.weight_lr);
      q.get("arch_lr", c.ensemble.arch_lr);
      q.get("weight_ema", c.weight_ema);
      q.require(c.surrogates >= 1, "surrogates", "must be at least 1");
      q.require(!c.ensemble.layers.empty() &&
                    std::all_of(c.ensemble.layers.begin(), c.ensemble.layers.end(), [](int l) { return l >= 1; }),
                "layers", "needs positive layer counts");
      q.require(c.ensemble.weight_lr > 0.0f, "weight_lr", "must be positive");
      q.require(c.ensemble.arch_lr > 0.0f, "arch_lr", "must be positive");
      q.require(c.weight_ema >= 0.0 && c.weight_ema < 1.0, "weight_ema", "must lie in [0, 1)");
      {
        Section fit = q.child("fit");
        fit.get("loss_threshold", c.fit.loss_threshold);
        fit.get("min_batches", c.fit.min_batches);
        fit.get("batch_cap", c.fit.batch_cap);
        fit.get("first_batch_cap", c.fit.first_batch_cap);
        fit.get("batch_size", c.fit.batch_size);
        fit.require(c.fit.loss_threshold >= 0.0, "loss_threshold", "must be non-negative");
        fit.require(c.fit.batch_cap >= 1 && c.fit.first_batch_cap >= 1, "batch_cap", "caps must be positive");
      }
      {
        Section sp = q.child("squareplus");
        sp.get("beta", c.squareplus.beta);
        sp.get("max_proposals", c.squareplus.max_proposals);
        std::string binding = binding_name(c.squareplus.binding);
        sp.get("binding", binding);
        if (binding == "min_distance") {
          c.squareplus.binding = attackers::Binding::kMinDistance;
        } else if (binding == "every_point") {
          c.squareplus.binding = attackers::Binding::kEveryPoint;
        } else {
          sp.require(false, "binding", "must be \"min_distance\" or \"every_point\"");
        }
        sp.require(c.squareplus.beta >= 0.0, "beta", "must be non-negative");
        sp.require(c.squareplus.max_proposals >= 1, "max_proposals", "must be at least 1");
      }
      {
        Section sq = q.child("square");
        sq.get("p_init", c.schedule.p_init);
        sq.get("breakpoints", c.schedule.breakpoints);
        sq.require(c.schedule.p_init > 0.0f && c.schedule.p_init <= 1.0f, "p_init", "must lie in (0, 1]");
        sq.require(std::is_sorted(c.schedule.breakpoints.begin(), c.schedule.breakpoints.end()), "breakpoints",
                   "must be ascending");
      }
    }
    {
      Section ablation = root.child("ablation");
      ablation.get("disable_nas", c.disable_nas);
      ablation.get("disable_squareplus", c.disable_squareplus);
      ablation.get("square_only", c.square_only);
    }
    root.get("variant", c.variant);
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot open"});
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string canonical_json(const RunConfig& c) {
  const json doc = {
      {"data",
       {{"train", dataset_json(c.train_data)},
        {"attack", dataset_json(c.attack_data)},
        {"attack_samples", c.attack_samples}}},
      {"victim",
       {{"checkpoint", c.victim_checkpoint},
        {"endpoint", c.victim_endpoint},
        {"training",
         {{"seed", c.victim_seed},
          {"epochs", c.victim_training.epochs},
          {"batch_size", c.victim_training.batch_size},
          {"learning_rate", c.victim_training.learning_rate},
          {"held_out_fraction", c.victim_training.held_out_fraction},
          {"min_accuracy", c.victim_training.min_accuracy}}}}},
      {"attack",
       {{"norm", std::string(data::to_string(c.norm))},
        {"eps", c.eps},
        {"budget", c.budget},
        {"seeds", c.seeds},
        {"exclude_misclassified", c.exclude_misclassified}}},
      {"querynet",
       {{"surrogates", c.surrogates},
        {"layers", c.ensemble.layers},
        {"weight_lr", c.ensemble.weight_lr},
        {"arch_lr", c.ensemble.arch_lr},
        {"weight_ema", c.weight_ema},
        {"fit",
         {{"loss_threshold", c.fit.loss_threshold},
          {"min_batches", c.fit.min_batches},
          {"batch_cap", c.fit.batch_cap},
          {"first_batch_cap", c.fit.first_batch_cap},
          {"batch_size", c.fit.batch_size}}},
        {"squareplus",
         {{"beta", c.squareplus.beta},
          {"max_proposals", c.squareplus.max_proposals},
          {"binding", binding_name(c.squareplus.binding)}}},
        {"square", {{"p_init", c.schedule.p_init}, {"breakpoints", c.schedule.breakpoints}}}}},
      {"ablation",
       {{"disable_nas", c.disable_nas}, {"disable_squareplus", c.disable_squareplus}, {"square_only", c.square_only}}},
      {"variant", c.variant},
  };
  return doc.dump(2);
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canonical_json(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string variant_name(const RunConfig& c) {
  if (!c.variant.empty()) return c.variant;
  if (c.square_only) return "square";
  std::string name = "querynet-n" + std::to_string(c.surrogates);
  if (c.disable_nas) name += "-nonas";
  if (c.disable_squareplus) name += "-nosquareplus";
  return name;
}

driver::AttackConfig attack_config(const RunConfig& c, std::uint64_t seed) {
  driver::AttackConfig a;
  a.budget = c.budget;
  a.exclude_misclassified = c.exclude_misclassified;
  auto& q = a.querynet;
  q.norm = c.norm;
  q.eps = c.eps;
  q.surrogates = c.surrogates;
  q.ensemble = c.ensemble;
  q.fit = c.fit;
  q.schedule = c.schedule;
  q.squareplus = c.squareplus;
  q.disable_nas = c.disable_nas;
  q.disable_squareplus = c.disable_squareplus;
  q.square_only = c.square_only;
  q.weight_ema = c.weight_ema;
  q.seed = seed;
  return a;
}

data::LabeledSet load_dataset(const DatasetConfig& d) {
  if (d.kind == "idx") return data::load_idx(d.images, d.labels, d.limit);
  return data::synth_dataset(d.synth);
}

data::LabeledSet attack_set(const RunConfig& c) {
  auto set = load_dataset(c.attack_data);
  if (c.attack_samples == 0 || c.attack_samples >= set.size()) return set;
  std::vector<std::size_t> rows(c.attack_samples);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return set.subset(rows);
}

}  // namespace querynet::cli
