#include "mtsnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace mtsnn {

std::string to_string(LossKind kind) { return kind == LossKind::SoftmaxCe ? "softmax_ce" : "mse"; }

LossKind parse_loss_kind(const std::string& text) {
  if (text == "softmax_ce") return LossKind::SoftmaxCe;
  if (text == "mse") return LossKind::Mse;
  throw std::invalid_argument("unknown loss '" + text + "' (expected softmax_ce or mse)");
}

std::string to_string(EventSlicing slicing) { return slicing == EventSlicing::Count ? "count" : "time"; }

EventSlicing parse_event_slicing(const std::string& text) {
  if (text == "count") return EventSlicing::Count;
  if (text == "time") return EventSlicing::Time;
  throw std::invalid_argument("unknown event slicing '" + text + "' (expected count or time)");
}

ModelConfig preset_by_name(const std::string& name) {
  if (name == "vgg8") return presets::vgg8();
  if (name == "vgg9") return presets::vgg9();
  if (name == "vgg12") return presets::vgg12();
  if (name == "resnet20") return presets::resnet20();
  if (name == "tiny_vgg") return presets::tiny_vgg();
  throw ConfigError("unknown model preset '" + name + "' (expected vgg8, vgg9, vgg12, resnet20 or tiny_vgg)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::uint64_t parse_uint(const std::string& text) {
  std::uint64_t v = 0;
  const std::string t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& text) {
  double v = 0;
  const std::string t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw std::invalid_argument("expected a number, got '" + text + "'");
  }
  return v;
}

bool parse_flag(const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + text + "'");
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& format, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += format(items[i]);
  }
  return out;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string size_str(std::size_t v) { return std::to_string(v); }

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = {
      {"run.name", [](RunConfig& c, const std::string& v) { c.name = trim(v); }, [](const RunConfig& c) { return c.name; }},
      {"model.preset", [](RunConfig&, const std::string&) {}, [](const RunConfig&) { return std::string(); }},
      {"model.arch", [](RunConfig& c, const std::string& v) { c.model.arch = parse_arch(trim(v)); },
       [](const RunConfig& c) { return to_string(c.model.arch); }},
      {"model.stages",
       [](RunConfig& c, const std::string& v) {
         c.model.stages.clear();
         for (const auto& item : split(v, ',')) {
           const auto x = item.find('x');
           if (x == std::string::npos) throw std::invalid_argument("stage '" + item + "' is not <convs>x<filters>");
           c.model.stages.push_back({parse_uint(item.substr(0, x)), parse_uint(item.substr(x + 1))});
         }
       },
       [](const RunConfig& c) {
         return join(c.model.stages, [](const StageSpec& s) { return size_str(s.convs) + "x" + size_str(s.filters); });
       }},
      {"model.fc_widths",
       [](RunConfig& c, const std::string& v) {
         c.model.fc_widths.clear();
         for (const auto& item : split(v, ',')) c.model.fc_widths.push_back(parse_uint(item));
       },
       [](const RunConfig& c) { return join(c.model.fc_widths, size_str); }},
      {"model.steps", [](RunConfig& c, const std::string& v) { c.model.steps = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.model.steps); }},
      {"model.output_mode", [](RunConfig& c, const std::string& v) { c.model.output_mode = parse_output_mode(trim(v)); },
       [](const RunConfig& c) { return to_string(c.model.output_mode); }},
      {"model.neuron", [](RunConfig& c, const std::string& v) { c.model.neuron = parse_neuron_kind(trim(v)); },
       [](const RunConfig& c) { return to_string(c.model.neuron); }},
      {"model.v_th", [](RunConfig& c, const std::string& v) { c.model.v_th = parse_real(v); },
       [](const RunConfig& c) { return format_real(c.model.v_th); }},
      {"model.surrogate_width", [](RunConfig& c, const std::string& v) { c.model.surrogate_width = parse_real(v); },
       [](const RunConfig& c) { return format_real(c.model.surrogate_width); }},
      {"model.init_a", [](RunConfig& c, const std::string& v) { c.model.init_a = parse_real(v); },
       [](const RunConfig& c) { return format_real(c.model.init_a); }},
      {"model.input_shape",
       [](RunConfig& c, const std::string& v) {
         c.model.input_shape.clear();
         for (const auto& item : split(v, ',')) c.model.input_shape.push_back(parse_uint(item));
       },
       [](const RunConfig& c) { return join(c.model.input_shape, size_str); }},
      {"model.class_count", [](RunConfig& c, const std::string& v) { c.model.class_count = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.model.class_count); }},
      {"model.kernel_size", [](RunConfig& c, const std::string& v) { c.model.kernel_size = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.model.kernel_size); }},
      {"model.pool", [](RunConfig& c, const std::string& v) { c.model.pool = parse_pool_kind(trim(v)); },
       [](const RunConfig& c) { return to_string(c.model.pool); }},
      {"model.skip_kernel", [](RunConfig& c, const std::string& v) { c.model.skip_kernel = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.model.skip_kernel); }},
      {"model.voting_group", [](RunConfig& c, const std::string& v) { c.model.voting_group = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.model.voting_group); }},
      {"model.bn_momentum", [](RunConfig& c, const std::string& v) { c.model.bn_momentum = parse_real(v); },
       [](const RunConfig& c) { return format_real(c.model.bn_momentum); }},
      {"model.bn_epsilon", [](RunConfig& c, const std::string& v) { c.model.bn_epsilon = parse_real(v); },
       [](const RunConfig& c) { return format_real(c.model.bn_epsilon); }},
      {"mt.deltas",
       [](RunConfig& c, const std::string& v) {
         c.model.mt.deltas.clear();
         const std::string t = trim(v);
         if (t == "none" || t == "[]") return;
         for (const auto& item : split(t, ',')) c.model.mt.deltas.push_back(parse_real(item));
       },
       [](const RunConfig& c) { return join(c.model.mt.deltas, format_real); }},
      {"mt.scope", [](RunConfig& c, const std::string& v) { c.model.mt.scope = parse_mt_scope(trim(v)); },
       [](const RunConfig& c) { return to_string(c.model.mt.scope); }},
      {"mt.apply_to_encoder", [](RunConfig& c, const std::string& v) { c.model.mt.apply_to_encoder = parse_flag(v); },
       [](const RunConfig& c) { return std::string(c.model.mt.apply_to_encoder ? "true" : "false"); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.train.epochs); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.train.batch_size); }},
      {"train.lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_real(v); },
       [](const RunConfig& c) { return format_real(c.train.lr); }},
      {"train.momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = parse_real(v); },
       [](const RunConfig& c) { return format_real(c.train.momentum); }},
      {"train.lr_milestones",
       [](RunConfig& c, const std::string& v) {
         c.train.milestones.clear();
         for (const auto& item : split(v, ',')) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) throw std::invalid_argument("milestone '" + item + "' is not <epoch>:<multiplier>");
           c.train.milestones.push_back({parse_uint(item.substr(0, colon)), parse_real(item.substr(colon + 1))});
         }
       },
       [](const RunConfig& c) {
         return join(c.train.milestones, [](const Milestone& m) { return size_str(m.epoch) + ":" + format_real(m.multiplier); });
       }},
      {"train.loss", [](RunConfig& c, const std::string& v) { c.train.loss = parse_loss_kind(trim(v)); },
       [](const RunConfig& c) { return to_string(c.train.loss); }},
      {"train.seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_uint(v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"train.augment", [](RunConfig& c, const std::string& v) { c.train.augment = parse_flag(v); },
       [](const RunConfig& c) { return std::string(c.train.augment ? "true" : "false"); }},
      {"train.checkpoint_every", [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.train.checkpoint_every); }},
      {"data.dataset",
       [](RunConfig& c, const std::string& v) {
         const std::string t = trim(v);
         if (t != "cifar10" && t != "synth" && t != "events") {
           throw std::invalid_argument("unknown dataset '" + t + "' (expected cifar10, synth or events)");
         }
         c.data.dataset = t;
       },
       [](const RunConfig& c) { return c.data.dataset; }},
      {"data.root", [](RunConfig& c, const std::string& v) { c.data.root = trim(v); },
       [](const RunConfig& c) { return c.data.root; }},
      {"data.train_limit", [](RunConfig& c, const std::string& v) { c.data.train_limit = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.data.train_limit); }},
      {"data.test_limit", [](RunConfig& c, const std::string& v) { c.data.test_limit = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.data.test_limit); }},
      {"data.synth_train", [](RunConfig& c, const std::string& v) { c.data.synth_train = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.data.synth_train); }},
      {"data.synth_test", [](RunConfig& c, const std::string& v) { c.data.synth_test = parse_uint(v); },
       [](const RunConfig& c) { return size_str(c.data.synth_test); }},
      {"data.event_slicing", [](RunConfig& c, const std::string& v) { c.data.event_slicing = parse_event_slicing(trim(v)); },
       [](const RunConfig& c) { return to_string(c.data.event_slicing); }},
  };
  return keys;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : schema()) {
    if (name == k.name) return k;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

std::vector<std::string> known_config_keys() {
  std::vector<std::string> out;
  for (const auto& k : schema()) out.emplace_back(k.name);
  return out;
}

ConfigEntries read_config_entries(const std::string& text) {
  // '#' comments are accepted alongside the parser's own ';' comments.
  std::string cleaned;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const std::string t = trim(line);
    if (!t.empty() && t[0] == '#') continue;
    cleaned += line;
    cleaned += '\n';
  }
  boost::property_tree::ptree tree;
  std::istringstream in(cleaned);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  ConfigEntries entries;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' must be inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      find_key(name);
      entries.emplace_back(name, value.get_value<std::string>());
    }
  }
  return entries;
}

void set_entry(ConfigEntries& entries, const std::string& key, const std::string& value) {
  find_key(key);
  auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == key; });
  if (it == entries.end()) {
    entries.emplace_back(key, value);
  } else {
    it->second = value;
  }
}

RunConfig resolve_config(const ConfigEntries& entries) {
  RunConfig config;
  for (const auto& [key, value] : entries) {
    if (key == "model.preset") config.model = preset_by_name(trim(value));
  }
  for (const auto& [key, value] : entries) {
    const Key& k = find_key(key);
    try {
      k.set(config, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  try {
    config.model.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (config.train.batch_size == 0) throw ConfigError("config key 'train.batch_size' must be positive");
  if (!(config.train.lr > 0)) throw ConfigError("config key 'train.lr' must be positive");
  if (config.train.momentum < 0 || config.train.momentum >= 1) {
    throw ConfigError("config key 'train.momentum' must be in [0, 1)");
  }
  return config;
}

RunConfig parse_run_config(const std::string& text) { return resolve_config(read_config_entries(text)); }

std::string to_config_text(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : schema()) {
    const std::string name = k.name;
    if (name == "model.preset") continue;
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace mtsnn
