// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "glr/tensor_io.hpp"

namespace glr {
namespace {

constexpr const char* kMagic = "GLRCKPT";
constexpr const char* kMomentPrefix = "adam.m/";
constexpr const char* kVariancePrefix = "adam.v/";

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "' expects an integer, got '" + v + "'", 2);
  }
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ParseError("config key '" + key + "' expects 0 or 1, got '" + v + "'", 2);
}

}  // namespace

std::string format_model_config(const ModelConfig& c) {
  std::ostringstream s;
  s << "D=" << c.depths << " G=" << c.group << " C=" << c.channels << " V=" << c.views
    << " variant=" << to_string(c.variant) << " upsample=" << to_string(c.upsample)
    << " pos_enc=" << (c.positional ? 1 : 0) << " ang_enc=" << (c.angular ? 1 : 0)
    << " sampling=" << to_string(c.sampling);
  return s.str();
}

ModelConfig parse_model_config(const std::string& line) {
  ModelConfig c;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError("malformed config token '" + tok + "'", 2);
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    if (key == "D") c.depths = parse_int(key, value);
    else if (key == "G") c.group = parse_int(key, value);
    else if (key == "C") c.channels = parse_int(key, value);
    else if (key == "V") c.views = parse_int(key, value);
    else if (key == "variant") c.variant = parse_variant(value);
    else if (key == "upsample") c.upsample = parse_upsample(value);
    else if (key == "pos_enc") c.positional = parse_flag(key, value);
    else if (key == "ang_enc") c.angular = parse_flag(key, value);
    else if (key == "sampling") c.sampling = parse_sampling(value);
    else throw ParseError("unknown config key '" + key + "'", 2);
  }
  c.validate();
  return c;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, const Tensor<float>*>> records;
  for (const auto& [name, t] : ckpt.weights) records.emplace_back(name, &t);
  if (ckpt.optimizer) {
    require_same_layout(ckpt.weights, ckpt.optimizer->first_moment, "checkpoint optimizer state");
    for (const auto& [name, t] : ckpt.optimizer->first_moment) records.emplace_back(kMomentPrefix + name, &t);
    for (const auto& [name, t] : ckpt.optimizer->second_moment) records.emplace_back(kVariancePrefix + name, &t);
  }

  out << kMagic << " 1\n";
  out << "config " << format_model_config(ckpt.config) << '\n';
  out << "step " << ckpt.step << '\n';
  if (ckpt.optimizer) out << "adam_step " << ckpt.optimizer->step << '\n';
  std::size_t offset = 0;
  for (const auto& [name, t] : records) {
    out << "param " << name << " f32 " << t->rank();
    for (int d : t->dims()) out << ' ' << d;
    out << ' ' << offset << '\n';
    offset += glrt_byte_size(t->dims());
  }
  out << "end\n";
  for (const auto& [_, t] : records) write_glrt(out, *t);
  if (!out) throw IoError("failed to write checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError("truncated checkpoint manifest", line_no);
    ++line_no;
    return line;
  };
  {
    std::istringstream s(next_line());
    std::string magic;
    int version = 0;
    if (!(s >> magic >> version) || magic != kMagic) throw ParseError("not a checkpoint file", line_no);
    if (version != 1) throw ParseError("unsupported checkpoint version " + std::to_string(version), line_no);
  }

  struct Entry {
    std::string name;
    Shape dims;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  std::optional<std::int64_t> adam_step;
  bool has_config = false;
  while (next_line() != "end") {
    std::istringstream s(line);
    std::string key;
    s >> key;
    if (key == "config") {
      std::string rest;
      std::getline(s, rest);
      try {
        ckpt.config = parse_model_config(rest);
      } catch (const ParseError& e) {
        throw ParseError(e.what(), line_no);
      }
      has_config = true;
    } else if (key == "step") {
      if (!(s >> ckpt.step)) throw ParseError("malformed step line", line_no);
    } else if (key == "adam_step") {
      std::int64_t v = 0;
      if (!(s >> v)) throw ParseError("malformed adam_step line", line_no);
      adam_step = v;
    } else if (key == "param") {
      Entry e;
      std::string dtype;
      std::size_t rank = 0;
      if (!(s >> e.name >> dtype >> rank) || dtype != "f32" || rank > 16) {
        throw ParseError("malformed param line", line_no);
      }
      e.dims.resize(rank);
      for (int& d : e.dims)
        if (!(s >> d)) throw ParseError("malformed param dims", line_no);
      if (!(s >> e.offset)) throw ParseError("missing param offset", line_no);
      entries.push_back(std::move(e));
    } else if (!key.empty()) {
      throw ParseError("unknown manifest key '" + key + "'", line_no);
    }
  }
  if (!has_config) throw ParseError("checkpoint manifest has no config line", line_no);

  std::map<std::string, Tensor<float>> moments;
  std::size_t offset = 0;
  for (const Entry& e : entries) {
    if (e.offset != offset) throw ParseError("param '" + e.name + "' offset does not match layout", 0);
    Tensor<float> t = read_glrt(in);
    require_shape(t.dims(), e.dims, "checkpoint param '" + e.name + "'");
    offset += glrt_byte_size(e.dims);
    if (e.name.starts_with(kMomentPrefix) || e.name.starts_with(kVariancePrefix)) {
      moments.emplace(e.name, std::move(t));
    } else {
      ckpt.weights.add(e.name, std::move(t));
    }
  }

  const ConvGlr<float> model(ckpt.config);
  ParamSet<float> expected;
  for (const auto& [name, dims] : model.parameter_shapes()) expected.add(name, Tensor<float>(dims));
  require_same_layout(expected, ckpt.weights, "checkpoint weights");

  if (!moments.empty()) {
    AdamState<float> state;
    for (const auto& [name, t] : ckpt.weights) {
      auto m = moments.find(kMomentPrefix + name);
      auto v = moments.find(kVariancePrefix + name);
      if (m == moments.end() || v == moments.end()) throw ParseError("incomplete optimizer state for '" + name + "'", 0);
      state.first_moment.add(name, std::move(m->second));
      state.second_moment.add(name, std::move(v->second));
    }
    state.step = adam_step.value_or(0);
    ckpt.optimizer = std::move(state);
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace glr
