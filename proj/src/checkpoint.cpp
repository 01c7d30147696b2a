// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace carte {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "CARTECKP";

std::uint64_t fnv1a64(const char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

// Doubles that may be infinite are stored as strings in that case.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double get_num(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw CheckpointError("bad number '" + s + "' in checkpoint header");
  }
  return j.get<double>();
}

class PayloadWriter {
 public:
  void add(const std::string& name, const Tensor& t) {
    const std::size_t offset = payload_.size();
    for (double v : t.values()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(payload_, bits);
    }
    const std::size_t nbytes = payload_.size() - offset;
    manifest_.push_back({{"name", name},
                         {"shape", t.shape()},
                         {"offset", offset},
                         {"nbytes", nbytes},
                         {"checksum", fnv1a64(payload_.data() + offset, nbytes)}});
  }

  template <class P>
  void add_all(const P& params, const std::string& prefix) {
    visit_params(params, prefix, [&](const std::string& name, const Tensor& t) { add(name, t); });
  }

  std::string finish(json header) const {
    header["version"] = std::string(kCheckpointVersion);
    header["tensors"] = manifest_;
    const std::string text = header.dump(1);
    std::string out(kMagic);
    put_u64(out, text.size());
    out += text;
    out += payload_;
    return out;
  }

 private:
  std::string payload_;
  json manifest_ = json::array();
};

class PayloadReader {
 public:
  explicit PayloadReader(std::string_view bytes) {
    if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
      throw CheckpointError("not a checkpoint file (bad magic)");
    }
    const std::uint64_t hlen = get_u64(bytes.data() + kMagic.size());
    const std::size_t hstart = kMagic.size() + 8;
    if (hlen > bytes.size() - hstart) {
      throw CheckpointError("truncated header: expected " + std::to_string(hlen) + " bytes, found " +
                            std::to_string(bytes.size() - hstart));
    }
    try {
      header_ = json::parse(bytes.substr(hstart, hlen));
    } catch (const json::exception& e) {
      throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    if (!header_.contains("version") || !header_["version"].is_string()) {
      throw CheckpointError("checkpoint header has no version");
    }
    const auto version = header_["version"].get<std::string>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version '" + version + "' (this reader supports " +
                            std::string(kCheckpointVersion) + ")");
    }
    payload_ = bytes.substr(hstart + hlen);
    std::size_t expected = 0;
    for (const auto& e : header_.at("tensors")) {
      const std::size_t end = e.at("offset").get<std::size_t>() + e.at("nbytes").get<std::size_t>();
      expected = std::max(expected, end);
      entries_.emplace(e.at("name").get<std::string>(), &e);
    }
    if (payload_.size() < expected) {
      throw CheckpointError("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                            std::to_string(payload_.size()));
    }
    if (payload_.size() > expected) {
      throw CheckpointError("payload has " + std::to_string(payload_.size() - expected) + " trailing bytes");
    }
  }

  const json& header() const { return header_; }

  void read(const std::string& name, Tensor& t) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    const json& e = *it->second;
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(t.shape()));
    }
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t nbytes = e.at("nbytes").get<std::size_t>();
    if (nbytes != 4 * t.size()) throw CheckpointError("tensor '" + name + "' has the wrong byte count");
    const char* p = payload_.data() + offset;
    if (fnv1a64(p, nbytes) != e.at("checksum").get<std::uint64_t>()) {
      throw CheckpointError("checksum mismatch for tensor '" + name + "'");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::uint32_t bits = get_u32(p + 4 * i);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      t[i] = static_cast<double>(f);
    }
    ++consumed_;
  }

  template <class P>
  void read_all(P& params, const std::string& prefix) {
    visit_params(params, prefix, [&](const std::string& name, Tensor& t) { read(name, t); });
  }

  void finish() const {
    if (consumed_ != entries_.size()) {
      throw CheckpointError("checkpoint holds " + std::to_string(entries_.size()) + " tensors, " +
                            std::to_string(consumed_) + " expected");
    }
  }

 private:
  json header_;
  std::string_view payload_;
  std::unordered_map<std::string, const json*> entries_;
  std::size_t consumed_ = 0;
};

json to_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"dropout", c.dropout},
          {"readout_depth", c.readout_depth},
          {"no_edge_features", c.no_edge_features},
          {"no_attention", c.no_attention}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.readout_depth = j.at("readout_depth").get<std::size_t>();
  c.no_edge_features = j.at("no_edge_features").get<bool>();
  c.no_attention = j.at("no_attention").get<bool>();
  c.validate();
  return c;
}

json to_json(const EmbeddingRef& e) { return {{"path", e.path}, {"dim", e.dim}, {"oov_seed", e.oov_seed}}; }

EmbeddingRef embedding_from(const json& j) {
  return {j.at("path").get<std::string>(), j.at("dim").get<std::size_t>(), j.at("oov_seed").get<std::uint64_t>()};
}

json to_json(const TrainConfig& t) {
  return {{"steps", t.steps},   {"warmup", t.warmup},           {"lr_min", t.lr_min},
          {"lr_max", t.lr_max}, {"weight_decay", t.weight_decay}, {"temperature", t.temperature},
          {"dropout", t.dropout}, {"seed", t.seed}};
}

TrainConfig train_config_from(const json& j) {
  TrainConfig t;
  t.steps = j.at("steps").get<std::size_t>();
  t.warmup = j.at("warmup").get<std::size_t>();
  t.lr_min = j.at("lr_min").get<double>();
  t.lr_max = j.at("lr_max").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.temperature = j.at("temperature").get<double>();
  t.dropout = j.at("dropout").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

json to_json(const SamplerConfig& s) {
  return {{"batch_entities", s.batch_entities},
          {"rich_fraction", s.rich_fraction},
          {"rich_threshold", s.rich_threshold},
          {"hops", s.graphlet.hops},
          {"cap1", s.graphlet.cap1},
          {"cap2", s.graphlet.cap2}};
}

SamplerConfig sampler_config_from(const json& j) {
  SamplerConfig s;
  s.batch_entities = j.at("batch_entities").get<std::size_t>();
  s.rich_fraction = j.at("rich_fraction").get<double>();
  s.rich_threshold = j.at("rich_threshold").get<std::size_t>();
  s.graphlet.hops = j.at("hops").get<std::size_t>();
  s.graphlet.cap1 = j.at("cap1").get<std::size_t>();
  s.graphlet.cap2 = j.at("cap2").get<std::size_t>();
  return s;
}

json to_json(const PowerTransform& p) { return {{"lambda", p.lambda}, {"mean", p.mean}, {"sd", p.sd}}; }

PowerTransform transform_from(const json& j) {
  return {j.at("lambda").get<double>(), j.at("mean").get<double>(), j.at("sd").get<double>()};
}

DownstreamModel downstream_skeleton(const ModelConfig& config) {
  Rng rng(0);
  DownstreamModel m;
  m.encoder.node_proj = init_linear(config.dim, config.dim, rng);
  m.encoder.edge_proj = init_linear(config.dim, config.dim, rng);
  m.encoder.readout = init_attention_layer(config.dim, false, rng);
  m.head = init_head(config.dim, rng);
  return m;
}

json estimator_header(const Estimator& est, PayloadWriter& w, const std::string& prefix) {
  json j;
  j["task"] = task_name(est.task);
  j["config"] = to_json(est.config);
  j["embedding"] = to_json(est.embedding);
  json cols = json::array();
  for (const auto& c : est.prep.schema.columns) {
    cols.push_back({{"name", c.name}, {"kind", c.kind == ColumnKind::numeric ? "numeric" : "string"}});
  }
  j["schema"] = {{"target", est.prep.schema.target}, {"columns", cols}};
  json numeric = json::array();
  for (const auto& t : est.prep.numeric) numeric.push_back(t ? to_json(*t) : json());
  j["numeric_transforms"] = numeric;
  j["target_transform"] = est.prep.target ? to_json(*est.prep.target) : json();
  json members = json::array();
  for (std::size_t m = 0; m < est.members.size(); ++m) {
    const auto& mem = est.members[m];
    members.push_back({{"split_seed", mem.split_seed},
                       {"learning_rate", mem.learning_rate},
                       {"best_epoch", mem.best_epoch},
                       {"val_loss", num(mem.val_loss)},
                       {"val_score", num(mem.val_score)}});
    w.add_all(mem.model, prefix + "members." + std::to_string(m) + ".");
  }
  j["members"] = members;
  return j;
}

Estimator estimator_from(const json& j, PayloadReader& r, const std::string& prefix) {
  Estimator est;
  est.task = parse_task(j.at("task").get<std::string>());
  est.config = model_config_from(j.at("config"));
  est.embedding = embedding_from(j.at("embedding"));
  est.prep.task = est.task;
  est.prep.schema.target = j.at("schema").at("target").get<std::string>();
  for (const auto& c : j.at("schema").at("columns")) {
    const auto kind = c.at("kind").get<std::string>();
    if (kind != "numeric" && kind != "string") throw CheckpointError("unknown column kind '" + kind + "'");
    est.prep.schema.columns.push_back(
        {c.at("name").get<std::string>(), kind == "numeric" ? ColumnKind::numeric : ColumnKind::string});
  }
  for (const auto& t : j.at("numeric_transforms")) {
    est.prep.numeric.push_back(t.is_null() ? std::nullopt : std::optional<PowerTransform>(transform_from(t)));
  }
  if (est.prep.numeric.size() != est.prep.schema.columns.size()) {
    throw CheckpointError("numeric transform count differs from column count");
  }
  if (!j.at("target_transform").is_null()) est.prep.target = transform_from(j.at("target_transform"));
  if (est.task == Task::regression && !est.prep.target) throw CheckpointError("regression estimator lacks a target transform");
  const auto& members = j.at("members");
  for (std::size_t m = 0; m < members.size(); ++m) {
    Member mem;
    mem.split_seed = members[m].at("split_seed").get<std::uint64_t>();
    mem.learning_rate = members[m].at("learning_rate").get<double>();
    mem.best_epoch = members[m].at("best_epoch").get<std::size_t>();
    mem.val_loss = get_num(members[m].at("val_loss"));
    mem.val_score = get_num(members[m].at("val_score"));
    mem.model = downstream_skeleton(est.config);
    r.read_all(mem.model, prefix + "members." + std::to_string(m) + ".");
    est.members.push_back(std::move(mem));
  }
  return est;
}

void expect_kind(const PayloadReader& r, std::string_view kind) {
  const auto k = r.header().at("kind").get<std::string>();
  if (k != kind) throw CheckpointError("checkpoint holds a " + k + ", expected a " + std::string(kind));
}

}  // namespace

std::string encode_model(const ModelCheckpoint& ckpt) {
  PayloadWriter w;
  w.add_all(ckpt.params, "");
  json h;
  h["kind"] = "model";
  h["config"] = to_json(ckpt.config);
  h["embedding"] = to_json(ckpt.embedding);
  h["train"] = ckpt.train ? to_json(*ckpt.train) : json();
  h["sampler"] = ckpt.sampler ? to_json(*ckpt.sampler) : json();
  return w.finish(std::move(h));
}

ModelCheckpoint decode_model(std::string_view bytes) {
  PayloadReader r(bytes);
  expect_kind(r, "model");
  try {
    ModelCheckpoint c;
    const json& h = r.header();
    c.config = model_config_from(h.at("config"));
    c.embedding = embedding_from(h.at("embedding"));
    if (!h.at("train").is_null()) c.train = train_config_from(h.at("train"));
    if (!h.at("sampler").is_null()) c.sampler = sampler_config_from(h.at("sampler"));
    c.params = init_model(c.config, 0);
    r.read_all(c.params, "");
    r.finish();
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed model checkpoint: ") + e.what());
  }
}

std::string encode_estimator(const Estimator& estimator) {
  PayloadWriter w;
  json h = estimator_header(estimator, w, "");
  h["kind"] = "estimator";
  return w.finish(std::move(h));
}

Estimator decode_estimator(std::string_view bytes) {
  PayloadReader r(bytes);
  expect_kind(r, "estimator");
  try {
    Estimator e = estimator_from(r.header(), r, "");
    r.finish();
    return e;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed estimator checkpoint: ") + e.what());
  }
}

std::string encode_ensemble(const EnsemblePredictor& ens) {
  PayloadWriter w;
  json h;
  h["kind"] = "ensemble";
  h["names"] = ens.names;
  json scores = json::array(), weights = json::array(), learners = json::array();
  for (double s : ens.scores) scores.push_back(num(s));
  for (double x : ens.weights) weights.push_back(x);
  for (std::size_t k = 0; k < ens.learners.size(); ++k) {
    learners.push_back(estimator_header(ens.learners[k], w, "learners." + std::to_string(k) + "."));
  }
  h["scores"] = scores;
  h["weights"] = weights;
  h["learners"] = learners;
  return w.finish(std::move(h));
}

EnsemblePredictor decode_ensemble(std::string_view bytes) {
  PayloadReader r(bytes);
  expect_kind(r, "ensemble");
  try {
    const json& h = r.header();
    EnsemblePredictor e;
    e.names = h.at("names").get<std::vector<std::string>>();
    for (const auto& s : h.at("scores")) e.scores.push_back(get_num(s));
    e.weights = h.at("weights").get<std::vector<double>>();
    const auto& learners = h.at("learners");
    for (std::size_t k = 0; k < learners.size(); ++k) {
      e.learners.push_back(estimator_from(learners[k], r, "learners." + std::to_string(k) + "."));
    }
    if (e.names.size() != e.learners.size() || e.scores.size() != e.learners.size() ||
        e.weights.size() != e.learners.size()) {
      throw CheckpointError("ensemble header lists disagree in length");
    }
    r.finish();
    return e;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed ensemble checkpoint: ") + e.what());
  }
}

std::string checkpoint_kind(std::string_view bytes) {
  PayloadReader r(bytes);
  return r.header().at("kind").get<std::string>();
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_model(const ModelCheckpoint& c, const std::filesystem::path& path) { write_file_bytes(path, encode_model(c)); }
ModelCheckpoint load_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }
void save_estimator(const Estimator& e, const std::filesystem::path& path) {
  write_file_bytes(path, encode_estimator(e));
}
Estimator load_estimator(const std::filesystem::path& path) { return decode_estimator(read_file_bytes(path)); }
void save_ensemble(const EnsemblePredictor& e, const std::filesystem::path& path) {
  write_file_bytes(path, encode_ensemble(e));
}
EnsemblePredictor load_ensemble(const std::filesystem::path& path) { return decode_ensemble(read_file_bytes(path)); }

void round_to_float(Tensor& t) {
  for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace carte
