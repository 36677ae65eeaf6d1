#include "ctxprobe/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ctxprobe/errors.hpp"

namespace ctxprobe {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'D', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    buf.push_back(static_cast<char>((v >> shift) & 0xff));
  }
}

// Cursor over an in-memory HSD1 image.
class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void require(std::uint64_t count, std::uint64_t expected_total) const {
    if (count > remaining()) {
      throw FormatError("truncated HSD1 stream: expected at least " +
                        std::to_string(expected_total) + " bytes, got " +
                        std::to_string(bytes_.size()));
    }
  }

  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes_[pos_++]); }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    const std::uint16_t hi = u8();
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int shift = 0; shift < 32; shift += 8) {
      v |= static_cast<std::uint32_t>(u8()) << shift;
    }
    return v;
  }
  std::string bytes(std::size_t count) {
    std::string out = bytes_.substr(pos_, count);
    pos_ += count;
    return out;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(Pooling pooling) {
  return pooling == Pooling::last_token ? "last_token" : "mean_pool";
}

Pooling parse_pooling(std::string_view text) {
  if (text == "last_token") return Pooling::last_token;
  if (text == "mean_pool") return Pooling::mean_pool;
  throw FormatError("unknown pooling '" + std::string(text) + "'");
}

HiddenStateDataset::HiddenStateDataset(std::size_t num_layers, std::size_t hidden_dim,
                                       Pooling pooling)
    : num_layers_(num_layers), hidden_dim_(hidden_dim), pooling_(pooling) {
  if (num_layers_ < 1 || hidden_dim_ < 1) {
    throw InputError("dataset needs num_layers >= 1 and hidden_dim >= 1");
  }
}

void HiddenStateDataset::add(ExampleRecord record) {
  if (record.values.size() != num_layers_ * hidden_dim_) {
    throw InputError("example '" + record.id + "' has " +
                     std::to_string(record.values.size()) + " values, expected " +
                     std::to_string(num_layers_ * hidden_dim_));
  }
  if (record.label != Label::in_context && record.label != Label::out_of_context) {
    throw InputError("example '" + record.id + "' has an invalid label");
  }
  if (!ids_.insert(record.id).second) {
    throw InputError("duplicate example id '" + record.id + "'");
  }
  examples_.push_back(std::move(record));
}

std::span<const float> HiddenStateDataset::vector(std::size_t index,
                                                  std::size_t layer) const {
  if (layer >= num_layers_) {
    throw InputError("layer " + std::to_string(layer) + " out of range [0, " +
                     std::to_string(num_layers_) + ")");
  }
  return std::span<const float>(examples_.at(index).values)
      .subspan(layer * hidden_dim_, hidden_dim_);
}

Matrix HiddenStateDataset::layer_matrix(std::size_t layer) const {
  Matrix m(examples_.size(), hidden_dim_);
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto v = vector(i, layer);
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

std::vector<Label> HiddenStateDataset::labels() const {
  std::vector<Label> out;
  out.reserve(examples_.size());
  for (const auto& e : examples_) out.push_back(e.label);
  return out;
}

std::vector<std::string> HiddenStateDataset::ids() const {
  std::vector<std::string> out;
  out.reserve(examples_.size());
  for (const auto& e : examples_) out.push_back(e.id);
  return out;
}

std::size_t HiddenStateDataset::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(
      examples_.begin(), examples_.end(),
      [label](const ExampleRecord& e) { return e.label == label; }));
}

bool identical(const HiddenStateDataset& a, const HiddenStateDataset& b) {
  if (a.num_layers() != b.num_layers() || a.hidden_dim() != b.hidden_dim() ||
      a.pooling() != b.pooling() || a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.examples()[i];
    const auto& y = b.examples()[i];
    if (x.id != y.id || x.label != y.label || x.values.size() != y.values.size()) {
      return false;
    }
    if (std::memcmp(x.values.data(), y.values.data(), x.values.size() * sizeof(float)) !=
        0) {
      return false;
    }
  }
  return true;
}

std::uint64_t hsd_size(const HiddenStateDataset& dataset) {
  std::uint64_t total = kHsdHeaderSize;
  const std::uint64_t payload = 4ULL * dataset.num_layers() * dataset.hidden_dim();
  for (const auto& e : dataset.examples()) total += 2 + e.id.size() + 1 + payload;
  return total;
}

std::uint64_t write_hsd(const HiddenStateDataset& dataset, std::ostream& out) {
  constexpr std::uint64_t kU32Max = 0xffffffffULL;
  if (dataset.size() > kU32Max || dataset.num_layers() > kU32Max ||
      dataset.hidden_dim() > kU32Max) {
    throw InputError("dataset dimensions exceed the HSD1 u32 fields");
  }
  for (const auto& e : dataset.examples()) {
    if (e.id.size() > 0xffff) {
      throw InputError("example id longer than 65535 bytes: '" + e.id.substr(0, 32) +
                       "...'");
    }
  }

  std::string header;
  header.append(kMagic, sizeof(kMagic));
  put_u16(header, kVersion);
  header.push_back(static_cast<char>(dataset.pooling()));
  header.push_back('\0');
  put_u32(header, static_cast<std::uint32_t>(dataset.size()));
  put_u32(header, static_cast<std::uint32_t>(dataset.num_layers()));
  put_u32(header, static_cast<std::uint32_t>(dataset.hidden_dim()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::uint64_t written = header.size();

  std::string buf;
  for (const auto& e : dataset.examples()) {
    buf.clear();
    put_u16(buf, static_cast<std::uint16_t>(e.id.size()));
    buf.append(e.id);
    buf.push_back(static_cast<char>(e.label));
    for (const float v : e.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    written += buf.size();
  }
  if (!out) throw IoError("failed writing HSD1 stream");
  return written;
}

HiddenStateDataset read_hsd(std::istream& in) {
  const std::string bytes{std::istreambuf_iterator<char>(in),
                          std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError("failed reading HSD1 stream");

  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic: not an HSD1 stream");
  }
  r.require(kHsdHeaderSize, kHsdHeaderSize);
  r.bytes(4);
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw FormatError("unsupported HSD1 version " + std::to_string(version));
  }
  const std::uint8_t pooling_byte = r.u8();
  if (pooling_byte > 1) {
    throw FormatError("invalid pooling byte " + std::to_string(pooling_byte));
  }
  if (r.u8() != 0) throw FormatError("reserved header byte must be 0");
  const std::uint32_t num_examples = r.u32();
  const std::uint32_t num_layers = r.u32();
  const std::uint32_t hidden_dim = r.u32();
  if (num_layers == 0 || hidden_dim == 0) {
    throw FormatError("num_layers and hidden_dim must be positive");
  }

  HiddenStateDataset dataset(num_layers, hidden_dim, static_cast<Pooling>(pooling_byte));
  const std::uint64_t value_count = std::uint64_t{num_layers} * hidden_dim;
  const std::uint64_t payload = 4 * value_count;
  // Lower bound on the total size, refined as id lengths are read.
  std::uint64_t expected = kHsdHeaderSize + std::uint64_t{num_examples} * (3 + payload);
  for (std::uint32_t i = 0; i < num_examples; ++i) {
    r.require(2, expected);
    const std::uint16_t id_len = r.u16();
    expected += id_len;
    r.require(std::uint64_t{id_len} + 1 + payload, expected);
    ExampleRecord record;
    record.id = r.bytes(id_len);
    const std::uint8_t label = r.u8();
    if (label > 1) {
      throw FormatError("example '" + record.id + "' has label byte " +
                        std::to_string(label));
    }
    record.label = static_cast<Label>(label);
    record.values.resize(value_count);
    for (auto& v : record.values) v = std::bit_cast<float>(r.u32());
    try {
      dataset.add(std::move(record));
    } catch (const InputError& e) {
      throw FormatError(e.what());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError("HSD1 stream length mismatch: expected " +
                      std::to_string(r.position()) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  return dataset;
}

std::uint64_t write_hsd_file(const HiddenStateDataset& dataset,
                             const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::uint64_t n = write_hsd(dataset, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
  return n;
}

HiddenStateDataset read_hsd_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return read_hsd(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string Violation::to_string() const {
  return split + ": " + example_id + ": " + rule;
}

std::vector<Violation> validate(const SplitSet& splits) {
  std::vector<Violation> out;
  for (const auto& e : splits.calibration.examples()) {
    if (e.label != Label::in_context) {
      out.push_back({"calibration", e.id, "calibration must contain in-context examples only"});
    }
  }
  const auto& ref = splits.calibration;
  const std::pair<const char*, const HiddenStateDataset*> others[] = {
      {"tuning", &splits.tuning}, {"evaluation", &splits.evaluation}};
  for (const auto& [name, ds] : others) {
    if (ds->num_layers() != ref.num_layers()) {
      out.push_back({name, "-",
                     "num_layers " + std::to_string(ds->num_layers()) +
                         " differs from calibration's " + std::to_string(ref.num_layers())});
    }
    if (ds->hidden_dim() != ref.hidden_dim()) {
      out.push_back({name, "-",
                     "hidden_dim " + std::to_string(ds->hidden_dim()) +
                         " differs from calibration's " + std::to_string(ref.hidden_dim())});
    }
    if (ds->pooling() != ref.pooling()) {
      out.push_back({name, "-",
                     "pooling " + std::string(to_string(ds->pooling())) +
                         " differs from calibration's " +
                         std::string(to_string(ref.pooling()))});
    }
  }
  return out;
}

void SynthConfig::validate() const {
  if (num_layers < 1 || hidden_dim < 1) {
    throw InputError("synthetic config needs num_layers >= 1 and hidden_dim >= 1");
  }
  if (n_cal < 1 || n_tune_in < 1 || n_tune_out < 1 || n_eval_in < 1 || n_eval_out < 1) {
    throw InputError("synthetic config counts must all be >= 1");
  }
  if (separations.size() != num_layers) {
    throw InputError("expected " + std::to_string(num_layers) + " separations, got " +
                     std::to_string(separations.size()));
  }
  for (const double s : separations) {
    if (!(s >= 0.0 && std::isfinite(s))) {
      throw InputError("separations must be finite and non-negative");
    }
  }
}

namespace {

enum class Stream : std::uint32_t { direction = 1, calibration, tuning, evaluation };

std::mt19937_64 make_engine(std::uint64_t seed, Stream stream, std::uint64_t extra) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(extra),
                    static_cast<std::uint32_t>(extra >> 32)};
  return std::mt19937_64(seq);
}

void append_examples(HiddenStateDataset& dataset, const SynthConfig& config,
                     const std::vector<std::vector<double>>& directions,
                     std::mt19937_64& engine, const std::string& prefix,
                     std::size_t count, Label label) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = config.hidden_dim;
  for (std::size_t i = 0; i < count; ++i) {
    ExampleRecord record;
    char suffix[24];
    std::snprintf(suffix, sizeof(suffix), "%04zu", i);
    record.id = prefix + suffix;
    record.label = label;
    record.values.resize(config.num_layers * d);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      const double shift = is_positive(label) ? config.separations[l] : 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = normal(engine) + shift * directions[l][k];
        record.values[l * d + k] = static_cast<float>(v);
      }
    }
    dataset.add(std::move(record));
  }
}

}  // namespace

std::vector<double> planted_direction(std::uint64_t seed, std::size_t layer,
                                      std::size_t hidden_dim) {
  auto engine = make_engine(seed, Stream::direction, layer);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(hidden_dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : u) {
      x = normal(engine);
      norm += x * x;
    }
  } while (norm < 1e-24);
  norm = std::sqrt(norm);
  for (auto& x : u) x /= norm;
  return u;
}

SplitSet synth_generate(const SynthConfig& config) {
  config.validate();
  std::vector<std::vector<double>> directions;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    directions.push_back(planted_direction(config.seed, l, config.hidden_dim));
  }
  const std::size_t L = config.num_layers;
  const std::size_t d = config.hidden_dim;
  SplitSet splits{HiddenStateDataset(L, d), HiddenStateDataset(L, d),
                  HiddenStateDataset(L, d)};

  auto cal = make_engine(config.seed, Stream::calibration, 0);
  append_examples(splits.calibration, config, directions, cal, "cal-", config.n_cal,
                  Label::in_context);

  auto tune = make_engine(config.seed, Stream::tuning, 0);
  append_examples(splits.tuning, config, directions, tune, "tune-in-", config.n_tune_in,
                  Label::in_context);
  append_examples(splits.tuning, config, directions, tune, "tune-out-",
                  config.n_tune_out, Label::out_of_context);

  auto eval = make_engine(config.seed, Stream::evaluation, 0);
  append_examples(splits.evaluation, config, directions, eval, "eval-in-",
                  config.n_eval_in, Label::in_context);
  append_examples(splits.evaluation, config, directions, eval, "eval-out-",
                  config.n_eval_out, Label::out_of_context);
  return splits;
}

std::size_t planted_best_layer(const SynthConfig& config) {
  config.validate();
  const auto it = std::max_element(config.separations.begin(), config.separations.end());
  return static_cast<std::size_t>(it - config.separations.begin());
}

// Manifest ------------------------------------------------------------------

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    Manifest m;
    const auto& splits = doc.at("splits");
    m.calibration_path = splits.at("calibration").get<std::string>();
    m.tuning_path = splits.at("tuning").get<std::string>();
    m.evaluation_path = splits.at("evaluation").get<std::string>();
    if (doc.contains("model_id") && !doc.at("model_id").is_null()) {
      m.model_id = doc.at("model_id").get<std::string>();
    }
    m.pooling = parse_pooling(doc.at("pooling").get<std::string>());
    for (const auto& e : doc.value("examples", nlohmann::json::array())) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.split = e.at("split").get<std::string>();
      const int label = e.at("label").get<int>();
      if (label != 0 && label != 1) {
        throw FormatError("manifest entry '" + entry.id + "' has label " +
                          std::to_string(label));
      }
      entry.label = static_cast<Label>(label);
      if (e.contains("text") && !e.at("text").is_null()) {
        entry.text = e.at("text").get<std::string>();
      }
      m.examples.push_back(std::move(entry));
    }
    for (const auto& w : doc.value("warnings", nlohmann::json::array())) {
      m.warnings.push_back(w.get<std::string>());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest '" + path.string() + "': " + e.what());
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::ordered_json doc;
  doc["splits"] = {{"calibration", manifest.calibration_path},
                   {"tuning", manifest.tuning_path},
                   {"evaluation", manifest.evaluation_path}};
  doc["model_id"] = manifest.model_id ? nlohmann::ordered_json(*manifest.model_id)
                                      : nlohmann::ordered_json(nullptr);
  doc["pooling"] = std::string(to_string(manifest.pooling));
  auto examples = nlohmann::ordered_json::array();
  for (const auto& e : manifest.examples) {
    nlohmann::ordered_json item;
    item["id"] = e.id;
    item["split"] = e.split;
    item["label"] = static_cast<int>(e.label);
    if (e.text) item["text"] = *e.text;
    examples.push_back(std::move(item));
  }
  doc["examples"] = std::move(examples);
  if (!manifest.warnings.empty()) doc["warnings"] = manifest.warnings;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

SplitSet load_splits(const std::filesystem::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  auto load = [&](const std::string& rel) {
    const std::filesystem::path p(rel);
    return read_hsd_file(p.is_absolute() ? p : base / p);
  };
  SplitSet splits{load(m.calibration_path), load(m.tuning_path), load(m.evaluation_path)};
  for (const auto* ds : {&splits.calibration, &splits.tuning, &splits.evaluation}) {
    if (ds->pooling() != m.pooling) {
      throw FormatError("HSD1 pooling " + std::string(to_string(ds->pooling())) +
                        " disagrees with manifest pooling " +
                        std::string(to_string(m.pooling)));
    }
  }
  return splits;
}

std::filesystem::path save_splits(const SplitSet& splits,
                                  const std::filesystem::path& directory,
                                  std::optional<std::string> model_id) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create '" + directory.string() + "': " + ec.message());

  Manifest m;
  m.calibration_path = "calibration.hsd";
  m.tuning_path = "tuning.hsd";
  m.evaluation_path = "evaluation.hsd";
  m.model_id = std::move(model_id);
  m.pooling = splits.calibration.pooling();
  const std::pair<const char*, const HiddenStateDataset*> parts[] = {
      {"calibration", &splits.calibration},
      {"tuning", &splits.tuning},
      {"evaluation", &splits.evaluation}};
  for (const auto& [name, ds] : parts) {
    write_hsd_file(*ds, directory / (std::string(name) + ".hsd"));
    for (const auto& e : ds->examples()) m.examples.push_back({e.id, name, e.label, {}});
  }
  const auto manifest_path = directory / "manifest.json";
  write_manifest(m, manifest_path);
  return manifest_path;
}

std::vector<Violation> validate_manifest(const Manifest& manifest,
                                         const SplitSet& splits) {
  const std::map<std::string, const HiddenStateDataset*> by_split = {
      {"calibration", &splits.calibration},
      {"tuning", &splits.tuning},
      {"evaluation", &splits.evaluation}};
  std::vector<Violation> out;
  for (const auto& entry : manifest.examples) {
    const auto it = by_split.find(entry.split);
    if (it == by_split.end()) {
      out.push_back({"manifest", entry.id, "unknown split '" + entry.split + "'"});
      continue;
    }
    const auto& examples = it->second->examples();
    const auto match = std::find_if(examples.begin(), examples.end(),
                                    [&](const ExampleRecord& r) { return r.id == entry.id; });
    if (match == examples.end()) {
      out.push_back({entry.split, entry.id, "listed in manifest but missing from file"});
    } else if (match->label != entry.label) {
      out.push_back({entry.split, entry.id, "manifest label disagrees with file label"});
    }
  }
  return out;
}

}  // namespace ctxprobe
