/*
 * Copyright 2026 The fedtopo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedtopo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "fedtopo/rng.hpp"
#include "fedtopo/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedtopo::cli {
namespace {

// Reads the members of one JSON object, remembering which keys were used so
// that leftovers (typos) can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void get(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!v.is_boolean()) fail(where(key), "expected true or false");
    out = v.get<bool>();
  }
  void get(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!non_negative_integer(v)) fail(where(key), "expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  void get(const std::string& key, std::uint64_t& out, int /*u64*/) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!non_negative_integer(v)) fail(where(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void get(const std::string& key, int& out) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!v.is_number_integer()) fail(where(key), "expected an integer");
    out = v.get<int>();
  }
  void get(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!v.is_number()) fail(where(key), "expected a number");
    out = v.get<double>();
  }
  void get(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!v.is_string()) fail(where(key), "expected a string");
    out = v.get<std::string>();
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!v.is_array()) fail(where(key), "expected an array of strings");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) fail(where(key), "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
  }
  template <typename R>
  void get_range(const std::string& key, R& out) {
    if (!has(key)) return;
    const json& v = child(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      fail(where(key), "expected [lo, hi]");
    out.lo = v[0].get<double>();
    out.hi = v[1].get<double>();
  }
  // Enum given by name; `parse` throws std::invalid_argument on a bad name.
  template <typename E, typename F>
  void get_enum(const std::string& key, E& out, F parse) {
    if (!has(key)) return;
    std::string name;
    get(key, name);
    try {
      out = parse(name);
    } catch (const std::invalid_argument& e) {
      fail(where(key), e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(where(it.key()), "unknown key");
  }

  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where.empty() ? what : where + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename R>
json range_json(const R& r) {
  return json::array({r.lo, r.hi});
}

void read_synthetic(ObjectReader& r, data::SyntheticSpec& s) {
  r.get("image_size", s.image_size);
  r.get("count_per_class", s.count_per_class);
  r.get_range("disk_radius", s.disk_radius);
  r.get_range("annulus_outer", s.annulus_outer);
  r.get_range("annulus_width", s.annulus_width);
  r.get("noise", s.noise);
  r.get("normalize", s.normalize);
  r.finish();
}

void read_dataset(ObjectReader& r, DatasetConfig& d) {
  r.get("kind", d.kind);
  r.get("train_images", d.train_images);
  r.get("train_labels", d.train_labels);
  r.get("test_images", d.test_images);
  r.get("test_labels", d.test_labels);
  r.get("train_batches", d.train_batches);
  r.get("test_batches", d.test_batches);
  if (r.has("synthetic")) {
    ObjectReader s(r.child("synthetic"), r.where("synthetic"));
    read_synthetic(s, d.synthetic);
  }
  r.get("synthetic_test_per_class", d.synthetic_test_per_class);
  r.get("train_subsample", d.train_subsample);
  r.get("test_subsample", d.test_subsample);
  r.finish();
}

void read_pi(ObjectReader& r, topo::PIConfig& pi) {
  r.get("resolution", pi.resolution);
  r.get("sigma", pi.sigma);
  r.get_range("birth_range", pi.birth_range);
  r.get_range("persistence_range", pi.persistence_range);
  r.get("include_essential", pi.include_essential);
  r.finish();
}

void read_schedule(ObjectReader& r, fed::ScheduleConfig& s) {
  r.get_enum("strategy", s.strategy, fed::schedule_from_string);
  r.get("alpha_max", s.alpha_max);
  r.get("alpha_min_global", s.alpha_min_global);
  r.get("e_warm", s.e_warm);
  r.get("gamma", s.gamma);
  r.get("beta", s.beta);
  r.get("window", s.window);
  r.get("l_min", s.l_min);
  r.get("l_max", s.l_max);
  r.get("ewma", s.ewma);
  r.get("eps", s.eps);
  r.finish();
}

void read_federation(ObjectReader& r, fed::FederationConfig& f) {
  r.get_enum("method", f.method, fed::method_from_string);
  r.get("rounds", f.rounds);
  r.get("local_epochs", f.local_epochs);
  r.get("batch_size", f.batch_size);
  r.get("lr", f.lr);
  r.get("momentum", f.momentum);
  r.get("lr_step", f.lr_step);
  r.get("lr_gamma", f.lr_gamma);
  r.get("prox_mu", f.prox_mu);
  r.get("block", f.block);
  if (r.has("schedule")) {
    ObjectReader s(r.child("schedule"), r.where("schedule"));
    read_schedule(s, f.schedule);
  }
  r.get_enum("te_mode", f.te_mode, fed::te_mode_from_string);
  r.get("te_samples", f.te_samples);
  r.get("te_upload", f.te_upload);
  r.get("detach_topology", f.detach_topology);
  r.get("threads", f.threads);
  r.finish();
}

void read_screen(ObjectReader& r, ScreenSettings& s) {
  r.get("blocks", s.blocks);
  if (r.has("metrics")) {
    std::vector<std::string> names;
    r.get("metrics", names);
    s.metrics.clear();
    for (const auto& n : names) {
      try {
        s.metrics.push_back(tgbs::metric_from_string(n));
      } catch (const std::invalid_argument& e) {
        ObjectReader::fail(r.where("metrics"), e.what());
      }
    }
  }
  r.get("n_pairs", s.n_pairs);
  r.get("pca_k", s.pca_k);
  r.get("samples", s.samples);
  r.get("checkpoint", s.checkpoint);
  r.finish();
}

std::vector<std::string> arch_blocks(const std::string& arch) {
  if (arch == "simple_cnn") return nn::SimpleCnn<double>().blocks();
  if (arch == "mini_resnet") return {"conv1", "stage1", "stage2", "stage3"};
  throw ConfigError("arch: unknown architecture '" + arch + "'");
}

// Wraps std::invalid_argument from a component's own validation.
template <typename F>
void check(const std::string& where, F f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void require_file(const std::string& where, const std::string& path) {
  if (path.empty()) throw ConfigError(where + ": path required");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw ConfigError(where + ": no such file '" + path + "'");
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Files are written to a hidden sibling of `out` and moved into place once
// all of them exist. A new output directory appears in one rename; on
// failure the staging directory is removed and `out` is left untouched.
class StagedOutput {
 public:
  explicit StagedOutput(const fs::path& out) : out_(clean(out)) {
    staging_ = out_.parent_path() / ("." + out_.filename().string() + ".partial");
    if (!out_.parent_path().empty()) fs::create_directories(out_.parent_path());
    fs::remove_all(staging_);
    fs::create_directory(staging_);
  }
  ~StagedOutput() {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
  fs::path path(const std::string& name) {
    names_.push_back(name);
    return staging_ / name;
  }
  void write(const std::string& name, std::string_view contents) { write_file_atomic(path(name), contents); }
  void commit() {
    if (!fs::exists(out_)) {
      fs::rename(staging_, out_);
      return;
    }
    if (!fs::is_directory(out_)) throw std::runtime_error(out_.string() + ": not a directory");
    for (const auto& n : names_) fs::rename(staging_ / n, out_ / n);
  }

 private:
  static fs::path clean(const fs::path& p) {
    fs::path n = fs::absolute(p).lexically_normal();
    return n.has_filename() ? n : n.parent_path();
  }
  fs::path out_, staging_;
  std::vector<std::string> names_;
};

fs::path output_dir(const ExperimentConfig& c, const fs::path& out) {
  fs::path dir = out.empty() ? fs::path(c.out) : out;
  if (dir.empty()) throw ConfigError("no output directory: set \"out\" or pass --out");
  return dir;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "");
  if (!r.has("version")) throw ConfigError("version: required");
  r.get("version", c.version);
  if (c.version != 1) throw ConfigError("version: unsupported version " + std::to_string(c.version));
  if (!r.has("seed")) throw ConfigError("seed: required");
  r.get("seed", c.seed, 0);
  r.get("out", c.out);
  if (r.has("dataset")) {
    ObjectReader d(r.child("dataset"), "dataset");
    read_dataset(d, c.dataset);
  }
  r.get("arch", c.arch);
  if (r.has("partition")) {
    ObjectReader p(r.child("partition"), "partition");
    p.get_enum("scheme", c.partition.scheme, part::scheme_from_string);
    p.get("clients", c.partition.clients);
    p.get("alpha", c.partition.alpha);
    p.get("k", c.partition.k);
    p.get("sigma_bar", c.partition.sigma_bar);
    p.finish();
  }
  if (r.has("pi")) {
    ObjectReader p(r.child("pi"), "pi");
    read_pi(p, c.pi);
  }
  if (r.has("federation")) {
    ObjectReader f(r.child("federation"), "federation");
    read_federation(f, c.federation);
  }
  if (r.has("screen")) {
    ObjectReader s(r.child("screen"), "screen");
    read_screen(s, c.screen);
  }
  r.finish();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  const auto& s = d.synthetic;
  const auto& f = c.federation;
  const auto& sc = f.schedule;
  json metrics = json::array();
  for (auto m : c.screen.metrics) metrics.push_back(tgbs::to_string(m));
  return json{
      {"version", c.version},
      {"seed", c.seed},
      {"out", c.out},
      {"dataset",
       {{"kind", d.kind},
        {"train_images", d.train_images},
        {"train_labels", d.train_labels},
        {"test_images", d.test_images},
        {"test_labels", d.test_labels},
        {"train_batches", d.train_batches},
        {"test_batches", d.test_batches},
        {"synthetic",
         {{"image_size", s.image_size},
          {"count_per_class", s.count_per_class},
          {"disk_radius", range_json(s.disk_radius)},
          {"annulus_outer", range_json(s.annulus_outer)},
          {"annulus_width", range_json(s.annulus_width)},
          {"noise", s.noise},
          {"normalize", s.normalize}}},
        {"synthetic_test_per_class", d.synthetic_test_per_class},
        {"train_subsample", d.train_subsample},
        {"test_subsample", d.test_subsample}}},
      {"arch", c.arch},
      {"partition",
       {{"scheme", part::to_string(c.partition.scheme)},
        {"clients", c.partition.clients},
        {"alpha", c.partition.alpha},
        {"k", c.partition.k},
        {"sigma_bar", c.partition.sigma_bar}}},
      {"pi",
       {{"resolution", c.pi.resolution},
        {"sigma", c.pi.sigma},
        {"birth_range", range_json(c.pi.birth_range)},
        {"persistence_range", range_json(c.pi.persistence_range)},
        {"include_essential", c.pi.include_essential}}},
      {"federation",
       {{"method", fed::to_string(f.method)},
        {"rounds", f.rounds},
        {"local_epochs", f.local_epochs},
        {"batch_size", f.batch_size},
        {"lr", f.lr},
        {"momentum", f.momentum},
        {"lr_step", f.lr_step},
        {"lr_gamma", f.lr_gamma},
        {"prox_mu", f.prox_mu},
        {"block", f.block},
        {"schedule",
         {{"strategy", fed::to_string(sc.strategy)},
          {"alpha_max", sc.alpha_max},
          {"alpha_min_global", sc.alpha_min_global},
          {"e_warm", sc.e_warm},
          {"gamma", sc.gamma},
          {"beta", sc.beta},
          {"window", sc.window},
          {"l_min", sc.l_min},
          {"l_max", sc.l_max},
          {"ewma", sc.ewma},
          {"eps", sc.eps}}},
        {"te_mode", fed::to_string(f.te_mode)},
        {"te_samples", f.te_samples},
        {"te_upload", f.te_upload},
        {"detach_topology", f.detach_topology},
        {"threads", f.threads}}},
      {"screen",
       {{"blocks", c.screen.blocks},
        {"metrics", metrics},
        {"n_pairs", c.screen.n_pairs},
        {"pca_k", c.screen.pca_k},
        {"samples", c.screen.samples},
        {"checkpoint", c.screen.checkpoint}}},
  };
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  const fs::path base = path.parent_path();
  auto& d = c.dataset;
  for (auto* p : {&d.train_images, &d.train_labels, &d.test_images, &d.test_labels, &c.screen.checkpoint})
    *p = resolve(base, *p);
  for (auto* v : {&d.train_batches, &d.test_batches})
    for (auto& p : *v) p = resolve(base, p);
  if (!c.out.empty()) c.out = resolve(base, c.out);
  return c;
}

fed::FederationConfig federation_config(const ExperimentConfig& c) {
  fed::FederationConfig f = c.federation;
  f.pi = c.pi;
  f.seed = c.seed;
  return f;
}

void validate(const ExperimentConfig& c) {
  if (c.version != 1) throw ConfigError("version: unsupported version " + std::to_string(c.version));
  const auto& d = c.dataset;
  if (d.kind == "synthetic") {
    check("dataset.synthetic", [&] { d.synthetic.validate(); });
    if (d.synthetic_test_per_class == 0) throw ConfigError("dataset.synthetic_test_per_class: must be positive");
  } else if (d.kind == "idx") {
    require_file("dataset.train_images", d.train_images);
    require_file("dataset.train_labels", d.train_labels);
    require_file("dataset.test_images", d.test_images);
    require_file("dataset.test_labels", d.test_labels);
  } else if (d.kind == "cifar10") {
    if (d.train_batches.empty()) throw ConfigError("dataset.train_batches: at least one batch required");
    if (d.test_batches.empty()) throw ConfigError("dataset.test_batches: at least one batch required");
    for (const auto& p : d.train_batches) require_file("dataset.train_batches", p);
    for (const auto& p : d.test_batches) require_file("dataset.test_batches", p);
  } else {
    throw ConfigError("dataset.kind: expected synthetic, idx or cifar10, got '" + d.kind + "'");
  }
  if (d.kind == "synthetic" && c.arch == "simple_cnn" && d.synthetic.image_size != 28)
    throw ConfigError("dataset.synthetic.image_size: simple_cnn needs 28x28 inputs");
  const auto blocks = arch_blocks(c.arch);

  const auto& p = c.partition;
  if (p.clients == 0) throw ConfigError("partition.clients: must be positive");
  if ((p.scheme == part::Scheme::q_skew || p.scheme == part::Scheme::l_skew) && !(p.alpha > 0.0 && std::isfinite(p.alpha)))
    throw ConfigError("partition.alpha: must be positive and finite");
  if (p.scheme == part::Scheme::fixed_k && p.k == 0) throw ConfigError("partition.k: must be positive");
  if (p.scheme == part::Scheme::n_skew && !(p.sigma_bar >= 0.0 && std::isfinite(p.sigma_bar)))
    throw ConfigError("partition.sigma_bar: must be non-negative and finite");

  check("pi", [&] { c.pi.validate(); });
  check("federation", [&] { federation_config(c).validate(); });
  if (std::find(blocks.begin(), blocks.end(), c.federation.block) == blocks.end())
    throw ConfigError("federation.block: " + c.arch + " has no block '" + c.federation.block + "'");

  const auto& s = c.screen;
  if (s.blocks.empty()) throw ConfigError("screen.blocks: at least one block required");
  for (const auto& b : s.blocks)
    if (b != "input" && std::find(blocks.begin(), blocks.end(), b) == blocks.end())
      throw ConfigError("screen.blocks: " + c.arch + " has no block '" + b + "'");
  if (s.metrics.empty()) throw ConfigError("screen.metrics: at least one metric required");
  if (s.n_pairs == 0) throw ConfigError("screen.n_pairs: must be positive");
  if (s.pca_k == 0) throw ConfigError("screen.pca_k: must be positive");
  if (s.samples < 2) throw ConfigError("screen.samples: need at least two samples");
  if (!s.checkpoint.empty()) require_file("screen.checkpoint", s.checkpoint);
}

std::uint64_t stream_seed(std::uint64_t seed, const std::string& name) { return Rng(seed).substream(name).key(); }

Splits load_datasets(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  Splits s;
  if (d.kind == "synthetic") {
    const Rng data = Rng(c.seed).substream("data");
    data::SyntheticSpec spec = d.synthetic;
    spec.normalize = false;
    spec.seed = data.substream("train").key();
    s.train = data::gen_synthetic(spec);
    spec.seed = data.substream("test").key();
    spec.count_per_class = d.synthetic_test_per_class;
    s.test = data::gen_synthetic(spec);
    if (d.synthetic.normalize) {
      const auto stats = data::fit_normalization(s.train);
      data::normalize(s.train, stats);
      data::normalize(s.test, stats);
    }
  } else if (d.kind == "idx") {
    s.train = data::load_idx(d.train_images, d.train_labels);
    s.test = data::load_idx(d.test_images, d.test_labels, s.train.norm);
  } else if (d.kind == "cifar10") {
    std::vector<fs::path> train(d.train_batches.begin(), d.train_batches.end());
    std::vector<fs::path> test(d.test_batches.begin(), d.test_batches.end());
    s.train = data::load_cifar10(train);
    s.test = data::load_cifar10(test, s.train.norm);
  } else {
    throw ConfigError("dataset.kind: unknown kind '" + d.kind + "'");
  }
  s.test.split = "test";
  if (d.train_subsample > 0 && d.train_subsample < s.train.count)
    s.train = data::stratified_subsample(s.train, d.train_subsample);
  if (d.test_subsample > 0 && d.test_subsample < s.test.count)
    s.test = data::stratified_subsample(s.test, d.test_subsample);
  return s;
}

part::Partition make_partition(const ExperimentConfig& c, const data::Dataset& train) {
  const auto& p = c.partition;
  const std::uint64_t seed = stream_seed(c.seed, "partition");
  switch (p.scheme) {
    case part::Scheme::q_skew:
      return part::q_skew(train.count, p.clients, p.alpha, seed);
    case part::Scheme::l_skew:
      return part::l_skew(train.labels, p.clients, p.alpha, seed);
    case part::Scheme::fixed_k:
      return part::fixed_k_skew(train.labels, p.clients, p.k, seed);
    case part::Scheme::n_skew:
      return part::n_skew(train.count, p.clients, p.sigma_bar, seed);
  }
  throw std::logic_error("unhandled partition scheme");
}

std::unique_ptr<nn::Model<double>> make_model(const ExperimentConfig& c, const data::Dataset& train) {
  try {
    return nn::make_model<double>(c.arch, {train.channels, train.height, train.width}, train.num_classes);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("arch: ") + e.what());
  }
}

ph::ScalarField read_field(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  const std::string name = path.string();
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (text.size() >= 2 && text[0] == 'P' && (text[1] == '2' || text[1] == '5')) {
    // Header tokens may be spread over lines and interleaved with comments.
    std::size_t pos = 2, line = 1;
    auto token = [&]() -> std::size_t {
      for (;;) {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
          if (text[pos] == '\n') ++line;
          ++pos;
        }
        if (pos < text.size() && text[pos] == '#') {
          while (pos < text.size() && text[pos] != '\n') ++pos;
          continue;
        }
        break;
      }
      const std::size_t start = pos;
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      if (start == pos || (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))))
        throw std::runtime_error(name + ":" + std::to_string(line) + ": expected a non-negative integer");
      return std::stoul(text.substr(start, pos - start));
    };
    const bool binary = text[1] == '5';
    const std::size_t w = token(), h = token(), maxval = token();
    if (w == 0 || h == 0) throw std::runtime_error(name + ":" + std::to_string(line) + ": empty image");
    if (maxval == 0 || maxval > 65535)
      throw std::runtime_error(name + ":" + std::to_string(line) + ": maxval must be in 1..65535");
    std::vector<double> values(w * h);
    if (binary) {
      ++pos;  // the single whitespace byte after maxval
      const std::size_t bytes = maxval < 256 ? 1 : 2;
      if (text.size() - std::min(pos, text.size()) < values.size() * bytes)
        throw std::runtime_error(name + ": truncated pixel data");
      for (std::size_t i = 0; i < values.size(); ++i) {
        const auto* b = reinterpret_cast<const unsigned char*>(text.data() + pos + i * bytes);
        values[i] = bytes == 1 ? b[0] : (b[0] << 8 | b[1]);
      }
    } else {
      for (auto& v : values) {
        v = static_cast<double>(token());
        if (v > static_cast<double>(maxval))
          throw std::runtime_error(name + ":" + std::to_string(line) + ": pixel exceeds maxval");
      }
    }
    return ph::ScalarField(h, w, std::move(values));
  }

  std::vector<double> values;
  std::size_t width = 0, height = 0, lineno = 0;
  std::istringstream lines(text);
  std::string raw;
  while (std::getline(lines, raw)) {
    ++lineno;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> tokens;
    if (line.find(',') != std::string_view::npos) {
      tokens = split(line, ',');
    } else {
      for (auto tok : split(line, ' '))
        for (auto t : split(tok, '\t'))
          if (!t.empty()) tokens.push_back(t);
    }
    const std::size_t cols = tokens.size();
    for (auto tok : tokens) {
      double v = 0.0;
      if (!parse_double(tok, v) || !std::isfinite(v))
        throw std::runtime_error(name + ":" + std::to_string(lineno) + ": not a finite number: '" +
                                 std::string(trim(tok)) + "'");
      values.push_back(v);
    }
    if (height == 0) {
      width = cols;
    } else if (cols != width) {
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                               " values, found " + std::to_string(cols));
    }
    ++height;
  }
  if (height == 0) throw std::runtime_error(name + ": no data");
  return ph::ScalarField(height, width, std::move(values));
}

std::string cmd_ph(const fs::path& input, const std::optional<fs::path>& out) {
  const auto field = read_field(input);
  const auto diagram = ph::compute_persistence(ph::build_lower_star(field));
  std::ostringstream csv;
  ph::write_diagram_csv(csv, diagram);
  if (!out) return csv.str();
  fs::create_directories(*out);
  write_file_atomic(*out / "diagram.csv", csv.str());
  return "wrote " + (*out / "diagram.csv").string() + " (" + std::to_string(diagram.pairs.size()) + " pairs)\n";
}

std::string cmd_screen(const ExperimentConfig& c, const fs::path& out) {
  validate(c);
  const fs::path dir = output_dir(c, out);
  Splits s = load_datasets(c);
  const data::Dataset ds = c.screen.samples < s.train.count
                               ? data::stratified_subsample(s.train, c.screen.samples)
                               : s.train;
  auto model = make_model(c, s.train);
  if (c.screen.checkpoint.empty()) {
    Rng init = Rng(c.seed).substream("init");
    model->init(init);
  } else {
    nn::load_checkpoint(c.screen.checkpoint, model->params());
  }

  std::vector<tgbs::Block> blocks;
  for (const auto& name : c.screen.blocks) {
    tgbs::Block b{name, name == "input" ? tgbs::input_block(ds, true) : tgbs::extract_block(*model, ds, name)};
    blocks.push_back(std::move(b));
  }
  tgbs::ScreenConfig sc;
  sc.metrics = c.screen.metrics;
  sc.n_pairs = c.screen.n_pairs;
  sc.pca_k = c.screen.pca_k;
  sc.pi = c.pi;
  sc.seed = c.seed;
  const auto result = tgbs::screen_blocks(blocks, ds.labels, sc);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  const std::string csv = tgbs::scores_csv(result);
  StagedOutput staged(dir);
  staged.write("screen.csv", csv);
  staged.commit();
  return csv;
}

std::string cmd_partition(const ExperimentConfig& c, const fs::path& out) {
  validate(c);
  const fs::path dir = output_dir(c, out);
  const Splits s = load_datasets(c);
  const auto p = make_partition(c, s.train);
  const std::string summary = part::summary_csv(p, s.train.labels, s.train.num_classes);
  StagedOutput staged(dir);
  staged.write("partition.json", part::to_json(p));
  staged.write("partition_summary.csv", summary);
  staged.commit();
  return summary;
}

json train_report(const fed::FederationResult& r) {
  json rounds = json::array();
  for (const auto& l : r.rounds)
    rounds.push_back({{"round", l.round}, {"test_acc", l.test_acc}, {"delta", l.delta}, {"mean_tal", l.mean_tal}});
  json j{{"initial_acc", r.initial_acc}};
  if (!r.rounds.empty()) j["final_acc"] = r.rounds.back().test_acc;
  j["rounds"] = rounds;
  return j;
}

std::string cmd_train(const ExperimentConfig& c, const fs::path& out) {
  validate(c);
  const fs::path dir = output_dir(c, out);
  const Splits s = load_datasets(c);
  const auto p = make_partition(c, s.train);
  const auto prototype = make_model(c, s.train);
  const auto cfg = federation_config(c);
  const auto result = fed::run_federation(cfg, *prototype, s.train, s.test, p);
  for (const auto& l : result.rounds)
    for (const auto& w : l.warnings) std::cerr << "warning: round " << l.round << ": " << w << "\n";

  auto model = prototype->clone();
  model->set_flat(result.weights);
  const json report = train_report(result);

  StagedOutput staged(dir);
  staged.write("config.json", dump(config_to_json(c)));
  staged.write("partition.json", part::to_json(p));
  staged.write("epochs.csv", fed::epochs_csv(result.rounds));
  staged.write("rounds.csv", fed::rounds_csv(result.rounds));
  nn::save_checkpoint(staged.path("model.ftck"), model->params());
  staged.write("report.json", dump(report));
  staged.commit();

  std::ostringstream msg;
  msg << "initial_acc " << format_double(result.initial_acc) << "\n";
  for (const auto& l : result.rounds)
    msg << "round " << l.round << " test_acc " << format_double(l.test_acc) << " mean_tal "
        << format_double(l.mean_tal) << "\n";
  return msg.str();
}

std::string cmd_report(const std::vector<fs::path>& runs, const fs::path& out) {
  if (runs.empty()) throw ConfigError("report: no run directories given");
  std::ostringstream csv;
  csv << "run,method,scheme,clients,rounds,initial_acc,final_acc,final_mean_tal\n";
  for (const auto& run : runs) {
    json report, config;
    try {
      report = json::parse(read_text(run / "report.json"));
      config = json::parse(read_text(run / "config.json"));
    } catch (const json::parse_error& e) {
      throw std::runtime_error(run.string() + ": " + e.what());
    }
    const ExperimentConfig c = config_from_json(config);
    const auto& rounds = report.at("rounds");
    const double initial = report.at("initial_acc").get<double>();
    const double final_acc = report.contains("final_acc") ? report.at("final_acc").get<double>() : initial;
    const double tal = rounds.empty() ? 0.0 : rounds.back().at("mean_tal").get<double>();
    const fs::path norm = run.lexically_normal();
    const std::string label = norm.has_filename() ? norm.filename().string() : norm.parent_path().filename().string();
    csv << label << ',' << fed::to_string(c.federation.method) << ','
        << part::to_string(c.partition.scheme) << ',' << c.partition.clients << ',' << rounds.size() << ','
        << format_double(initial) << ',' << format_double(final_acc) << ',' << format_double(tal) << '\n';
  }
  fs::create_directories(out);
  write_file_atomic(out / "summary.csv", csv.str());
  return csv.str();
}

}  // namespace fedtopo::cli
