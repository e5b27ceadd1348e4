#include "fedvg/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace fedvg {

namespace {

struct Entry {
  std::string value;
  size_t line;
  mutable bool used = false;
};

using Table = std::map<std::string, Entry>;  // "section.key" -> entry

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Table tokenize(const std::string& text) {
  Table table;
  std::istringstream in(text);
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                        "' outside any [section]");
    const std::string full = section + "." + key;
    if (table.count(full))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + full + "'");
    table[full] = {value, lineno};
  }
  return table;
}

class Reader {
 public:
  explicit Reader(const Table& table) : table_(table) {}

  bool has(const std::string& key) const { return table_.count(key) > 0; }

  std::string require_str(const std::string& key) const {
    const auto it = table_.find(key);
    if (it == table_.end()) throw ConfigError("missing required field '" + key + "'");
    it->second.used = true;
    return it->second.value;
  }

  std::string str(const std::string& key, const std::string& dflt) const {
    return has(key) ? require_str(key) : dflt;
  }

  double num(const std::string& key, double dflt) const {
    if (!has(key)) return dflt;
    const auto it = table_.find(key);
    it->second.used = true;
    try {
      size_t pos = 0;
      const double v = std::stod(it->second.value, &pos);
      if (pos != it->second.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("line " + std::to_string(it->second.line) + ": field '" + key +
                        "' is not a number ('" + it->second.value + "')");
    }
  }

  int64_t integer(const std::string& key, int64_t dflt) const {
    const double v = num(key, static_cast<double>(dflt));
    const auto i = static_cast<int64_t>(v);
    if (static_cast<double>(i) != v)
      throw ConfigError("field '" + key + "' must be an integer");
    return i;
  }

  std::vector<int64_t> int_list(const std::string& key, std::vector<int64_t> dflt) const {
    if (!has(key)) return dflt;
    const std::string raw = require_str(key);
    std::vector<int64_t> out;
    if (trim(raw).empty()) return out;  // "hidden =" means no hidden layers
    std::stringstream ss(raw);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        out.push_back(std::stoll(trim(cell)));
      } catch (...) {
        throw ConfigError("field '" + key + "': bad integer list entry '" + cell + "'");
      }
    }
    return out;
  }

  void reject_unused() const {
    for (const auto& [key, entry] : table_)
      if (!entry.used)
        throw ConfigError("line " + std::to_string(entry.line) + ": unknown field '" + key + "'");
  }

 private:
  const Table& table_;
};

NormKind parse_norm(const std::string& s) {
  if (s == "l1") return NormKind::L1;
  if (s == "l2") return NormKind::L2;
  if (s == "spectral") return NormKind::Spectral;
  if (s == "delta") return NormKind::Delta;
  throw ConfigError("field 'strategy.norm': unknown norm '" + s + "'");
}

Granularity parse_granularity(const std::string& s) {
  if (s == "modelwise") return Granularity::Modelwise;
  if (s == "layerwise") return Granularity::Layerwise;
  if (s == "blockwise") return Granularity::Blockwise;
  throw ConfigError("field 'strategy.granularity': unknown granularity '" + s + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  const Table table = tokenize(text);
  const Reader r(table);
  ExperimentConfig c;

  const std::string model_kind = r.str("model.kind", "mlp");
  if (model_kind == "mlp") {
    c.model.kind = ModelSpec::Kind::Mlp;
    c.model.hidden_dims = r.int_list("model.hidden", {16});
  } else if (model_kind == "cnn") {
    c.model.kind = ModelSpec::Kind::TinyCnn;
    c.model.input_h = r.integer("model.input_h", 0);
    c.model.input_w = r.integer("model.input_w", 0);
    c.model.input_c = r.integer("model.input_c", 1);
  } else {
    throw ConfigError("field 'model.kind': unknown model kind '" + model_kind + "'");
  }

  const std::string data_kind = r.str("data.kind", "blobs");
  if (data_kind == "blobs") {
    c.data.kind = DataSpec::Kind::Blobs;
    c.data.num_classes = static_cast<int>(r.integer("data.classes", 5));
    c.data.samples_per_class = r.integer("data.samples_per_class", 200);
    c.data.feature_dim = r.integer("data.feature_dim", 8);
    c.data.separation = r.num("data.separation", 3.0);
    c.data.noise = r.num("data.noise", 1.0);
  } else if (data_kind == "csv") {
    c.data.kind = DataSpec::Kind::Csv;
    c.data.path = r.require_str("data.path");
  } else {
    throw ConfigError("field 'data.kind': unknown dataset kind '" + data_kind + "'");
  }
  c.data.val_frac = r.num("data.val_frac", 0.10);
  c.data.test_frac = r.num("data.test_frac", 0.25);
  if (r.has("data.rho")) c.rho = r.num("data.rho", 1.0);

  c.num_clients = static_cast<int>(r.integer("federation.clients", 10));
  c.join_ratio = r.num("federation.join_ratio", 0.1);
  c.alpha = r.num("federation.alpha", 100.0);
  c.rounds = static_cast<int>(r.integer("federation.rounds", 200));
  c.local_epochs = static_cast<int>(r.integer("federation.local_epochs", 5));
  c.batch_size = static_cast<int>(r.integer("federation.batch_size", 32));
  c.lr = r.num("federation.lr", 0.01);
  c.momentum = r.num("federation.momentum", 0.0);

  parse_strategy(r.require_str("strategy.name"), &c.strategy, &c.weighting);
  c.norm = parse_norm(r.str("strategy.norm", "l1"));
  c.granularity = parse_granularity(r.str("strategy.granularity", "modelwise"));
  c.epsilon = r.num("strategy.epsilon", 1e-8);
  c.hyper.server_momentum = r.num("strategy.server_momentum", 0.9);
  c.hyper.prox_mu = r.num("strategy.prox_mu", 0.01);
  c.hyper.dyn_alpha = r.num("strategy.feddyn_alpha", 0.1);
  c.hyper.dyn_max_grad_norm = r.num("strategy.feddyn_max_grad_norm", 10.0);
  c.hyper.scaffold_global_lr = r.num("strategy.scaffold_global_lr", 1.0);

  c.master_seed = static_cast<uint64_t>(r.integer("run.master_seed", 1));

  r.reject_unused();
  try {
    c.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string config_snapshot(const ExperimentConfig& c) {
  std::string out;
  out += "[model]\n";
  if (c.model.kind == ModelSpec::Kind::Mlp) {
    out += "kind = mlp\n";
    out += "hidden = ";
    for (size_t i = 0; i < c.model.hidden_dims.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(c.model.hidden_dims[i]);
    }
    out += "\n";
  } else {
    out += "kind = cnn\n";
    out += "input_h = " + std::to_string(c.model.input_h) + "\n";
    out += "input_w = " + std::to_string(c.model.input_w) + "\n";
    out += "input_c = " + std::to_string(c.model.input_c) + "\n";
  }
  out += "\n[data]\n";
  if (c.data.kind == DataSpec::Kind::Blobs) {
    out += "kind = blobs\n";
    out += "classes = " + std::to_string(c.data.num_classes) + "\n";
    out += "samples_per_class = " + std::to_string(c.data.samples_per_class) + "\n";
    out += "feature_dim = " + std::to_string(c.data.feature_dim) + "\n";
    out += "separation = " + fmt(c.data.separation) + "\n";
    out += "noise = " + fmt(c.data.noise) + "\n";
  } else {
    out += "kind = csv\n";
    out += "path = " + c.data.path + "\n";
  }
  out += "val_frac = " + fmt(c.data.val_frac) + "\n";
  out += "test_frac = " + fmt(c.data.test_frac) + "\n";
  if (c.rho) out += "rho = " + fmt(*c.rho) + "\n";
  out += "\n[federation]\n";
  out += "clients = " + std::to_string(c.num_clients) + "\n";
  out += "join_ratio = " + fmt(c.join_ratio) + "\n";
  out += "alpha = " + fmt(c.alpha) + "\n";
  out += "rounds = " + std::to_string(c.rounds) + "\n";
  out += "local_epochs = " + std::to_string(c.local_epochs) + "\n";
  out += "batch_size = " + std::to_string(c.batch_size) + "\n";
  out += "lr = " + fmt(c.lr) + "\n";
  out += "momentum = " + fmt(c.momentum) + "\n";
  out += "\n[strategy]\n";
  out += "name = " + strategy_name(c.strategy, c.weighting) + "\n";
  out += "norm = " + to_string(c.norm) + "\n";
  out += "granularity = " + to_string(c.granularity) + "\n";
  out += "epsilon = " + fmt(c.epsilon) + "\n";
  out += "server_momentum = " + fmt(c.hyper.server_momentum) + "\n";
  out += "prox_mu = " + fmt(c.hyper.prox_mu) + "\n";
  out += "feddyn_alpha = " + fmt(c.hyper.dyn_alpha) + "\n";
  out += "feddyn_max_grad_norm = " + fmt(c.hyper.dyn_max_grad_norm) + "\n";
  out += "scaffold_global_lr = " + fmt(c.hyper.scaffold_global_lr) + "\n";
  out += "\n[run]\n";
  out += "master_seed = " + std::to_string(c.master_seed) + "\n";
  return out;
}

}  // namespace fedvg
