#include "fedbcs/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedbcs/errors.hpp"

namespace fedbcs {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_real(Real v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, static_cast<double>(v));
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& value) {
  T out{};
  const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc{} || r.ptr != value.data() + value.size()) throw ConfigError("bad number '" + value + "'");
  return out;
}

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad boolean '" + value + "' (expected true or false)");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

// One binding per key: how to read a value into the config and how to
// print it back.
struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field size_field(T RunConfig::*group, std::size_t T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_number<std::size_t>(v); },
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <class T>
Field real_field(T RunConfig::*group, Real T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_number<double>(v); },
          [=](const RunConfig& c) { return format_real((c.*group).*member); }};
}

template <class T>
Field bool_field(T RunConfig::*group, bool T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_bool(v); },
          [=](const RunConfig& c) { return std::string((c.*group).*member ? "true" : "false"); }};
}

using Schema = std::map<std::string, std::map<std::string, Field>>;

const Schema& schema() {
  static const Schema s = [] {
    using F = FederationConfig;
    const auto fed = &RunConfig::federation;
    Schema out;
    out["federation"] = {
        {"clients", size_field(fed, &F::clients)},
        {"rounds", size_field(fed, &F::rounds)},
        {"local_epochs", size_field(fed, &F::local_epochs)},
        {"batch_size", size_field(fed, &F::batch_size)},
        {"seed",
         {[](RunConfig& c, const std::string& v) { c.federation.seed = parse_number<std::uint64_t>(v); },
          [](const RunConfig& c) { return std::to_string(c.federation.seed); }}},
        {"method",
         {[](RunConfig& c, const std::string& v) { c.federation.method = parse_method(v); },
          [](const RunConfig& c) { return std::string(to_string(c.federation.method)); }}},
        {"parallelism", size_field(fed, &F::parallelism)},
        {"eval_every", size_field(fed, &F::eval_every)},
        {"theory_monitor", bool_field(fed, &F::theory_monitor)},
        {"augment", bool_field(fed, &F::augment)},
    };
    out["optimizer"] = {
        {"kind",
         {[](RunConfig& c, const std::string& v) {
            if (v == "sgd") {
              c.federation.optimizer.kind = OptimizerKind::kSgd;
            } else if (v == "adam") {
              c.federation.optimizer.kind = OptimizerKind::kAdam;
            } else {
              throw ConfigError("bad optimizer '" + v + "' (expected sgd or adam)");
            }
          },
          [](const RunConfig& c) {
            return std::string(c.federation.optimizer.kind == OptimizerKind::kSgd ? "sgd" : "adam");
          }}},
        {"learning_rate",
         {[](RunConfig& c, const std::string& v) { c.federation.optimizer.learning_rate = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.optimizer.learning_rate); }}},
        {"weight_decay",
         {[](RunConfig& c, const std::string& v) { c.federation.optimizer.weight_decay = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.optimizer.weight_decay); }}},
        {"beta1",
         {[](RunConfig& c, const std::string& v) { c.federation.optimizer.beta1 = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.optimizer.beta1); }}},
        {"beta2",
         {[](RunConfig& c, const std::string& v) { c.federation.optimizer.beta2 = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.optimizer.beta2); }}},
        {"eps",
         {[](RunConfig& c, const std::string& v) { c.federation.optimizer.eps = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.optimizer.eps); }}},
    };
    out["loss"] = {
        {"lambda_c",
         {[](RunConfig& c, const std::string& v) { c.federation.loss.lambda_c = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.loss.lambda_c); }}},
        {"tau",
         {[](RunConfig& c, const std::string& v) { c.federation.loss.tau = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.loss.tau); }}},
    };
    out["model"] = {
        {"input_channels",
         {[](RunConfig& c, const std::string& v) { c.federation.net.input_channels = parse_number<std::size_t>(v); },
          [](const RunConfig& c) { return std::to_string(c.federation.net.input_channels); }}},
        {"class_count",
         {[](RunConfig& c, const std::string& v) { c.federation.net.class_count = parse_number<std::size_t>(v); },
          [](const RunConfig& c) { return std::to_string(c.federation.net.class_count); }}},
        {"level_channels",
         {[](RunConfig& c, const std::string& v) {
            c.federation.net.level_channels.clear();
            for (const auto& item : split_list(v)) {
              c.federation.net.level_channels.push_back(parse_number<std::size_t>(item));
            }
          },
          [](const RunConfig& c) {
            std::vector<std::string> items;
            for (auto ch : c.federation.net.level_channels) items.push_back(std::to_string(ch));
            return join(items);
          }}},
        {"tap_layers",
         {[](RunConfig& c, const std::string& v) { c.federation.net.tap_layers = split_list(v); },
          [](const RunConfig& c) { return join(c.federation.net.tap_layers); }}},
        {"fused_dim",
         {[](RunConfig& c, const std::string& v) { c.federation.net.fused_dim = parse_number<std::size_t>(v); },
          [](const RunConfig& c) { return std::to_string(c.federation.net.fused_dim); }}},
        {"leaky_slope",
         {[](RunConfig& c, const std::string& v) { c.federation.net.leaky_slope = parse_number<double>(v); },
          [](const RunConfig& c) { return format_real(c.federation.net.leaky_slope); }}},
    };
    out["server"] = {
        {"distance",
         {[](RunConfig& c, const std::string& v) {
            if (v == "cosine") {
              c.federation.server.distance = DistanceKind::kCosine;
            } else if (v == "euclidean") {
              c.federation.server.distance = DistanceKind::kEuclidean;
            } else {
              throw ConfigError("bad distance '" + v + "' (expected cosine or euclidean)");
            }
          },
          [](const RunConfig& c) {
            return std::string(c.federation.server.distance == DistanceKind::kCosine ? "cosine" : "euclidean");
          }}},
        {"finch_level",
         {[](RunConfig& c, const std::string& v) { c.federation.server.finch_level = parse_number<std::size_t>(v); },
          [](const RunConfig& c) { return std::to_string(c.federation.server.finch_level); }}},
    };
    const auto data = &RunConfig::data;
    out["data"] = {
        {"image_size", size_field(data, &DataSpec::image_size)},
        {"n_train", size_field(data, &DataSpec::n_train)},
        {"n_test", size_field(data, &DataSpec::n_test)},
    };
    out["run"] = {
        {"out_dir",
         {[](RunConfig& c, const std::string& v) { c.out_dir = v; }, [](const RunConfig& c) { return c.out_dir; }}},
        {"checked",
         {[](RunConfig& c, const std::string& v) { c.checked = parse_bool(v); },
          [](const RunConfig& c) { return std::string(c.checked ? "true" : "false"); }}},
        {"dump_data",
         {[](RunConfig& c, const std::string& v) { c.dump_data = parse_bool(v); },
          [](const RunConfig& c) { return std::string(c.dump_data ? "true" : "false"); }}},
    };
    return out;
  }();
  return s;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  const auto& sch = schema();
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto where = "line " + std::to_string(line_no) + ": ";
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!sch.contains(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where + "key outside of any [section]");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto& fields = sch.at(section);
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    try {
      it->second.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + "[" + section + "] " + key + ": " + e.what());
    }
  }
  try {
    cfg.federation.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  if (cfg.data.n_train == 0 || cfg.data.n_test == 0) throw ConfigError("invalid configuration: n_train and n_test must be >= 1");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, fields] : schema()) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [key, field] : fields) out << key << " = " << field.get(config) << '\n';
  }
  return out.str();
}

}  // namespace fedbcs
