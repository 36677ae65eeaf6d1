#pragma once

// Hidden-state datasets, the HSD1 binary format, split manifests and a
// synthetic generator with planted per-layer separation.
//
// HSD1 layout (little-endian):
//
//   "HSD1" | version u16 = 1 | pooling u8 | reserved u8 = 0 |
//   num_examples u32 | num_layers u32 | hidden_dim u32          (20 bytes)
//   per example: id_len u16 | id bytes | label u8 |
//                num_layers * hidden_dim binary32, layer-major

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctxprobe/matrix.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe {

enum class Pooling : std::uint8_t { last_token = 0, mean_pool = 1 };

std::string_view to_string(Pooling pooling);
/// Accepts "last_token" or "mean_pool"; throws FormatError otherwise.
Pooling parse_pooling(std::string_view text);

struct ExampleRecord {
  std::string id;
  Label label = Label::in_context;
  /// num_layers * hidden_dim values, layer-major.
  std::vector<float> values;
};

class HiddenStateDataset {
 public:
  HiddenStateDataset(std::size_t num_layers, std::size_t hidden_dim,
                     Pooling pooling = Pooling::last_token);

  /// Appends a record; throws InputError on a wrong vector length or a
  /// duplicate id.
  void add(ExampleRecord record);

  std::size_t num_layers() const noexcept { return num_layers_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  Pooling pooling() const noexcept { return pooling_; }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  const std::vector<ExampleRecord>& examples() const noexcept { return examples_; }

  /// The stored vector of example `index` at `layer`.
  std::span<const float> vector(std::size_t index, std::size_t layer) const;
  /// All examples' vectors at `layer` as a size() x hidden_dim matrix, in order.
  Matrix layer_matrix(std::size_t layer) const;
  std::vector<Label> labels() const;
  std::vector<std::string> ids() const;
  std::size_t count(Label label) const;

 private:
  std::size_t num_layers_;
  std::size_t hidden_dim_;
  Pooling pooling_;
  std::vector<ExampleRecord> examples_;
  std::unordered_set<std::string> ids_;
};

/// Bit-level equality: float payloads compared by their binary32 encodings.
bool identical(const HiddenStateDataset& a, const HiddenStateDataset& b);

inline constexpr std::size_t kHsdHeaderSize = 20;

/// Exact byte size write_hsd produces for `dataset`.
std::uint64_t hsd_size(const HiddenStateDataset& dataset);

/// Returns the number of bytes written. Throws InputError for ids over 65535
/// bytes and IoError when the sink fails.
std::uint64_t write_hsd(const HiddenStateDataset& dataset, std::ostream& out);
/// Throws FormatError on any layout violation, including trailing bytes.
HiddenStateDataset read_hsd(std::istream& in);

std::uint64_t write_hsd_file(const HiddenStateDataset& dataset,
                             const std::filesystem::path& path);
HiddenStateDataset read_hsd_file(const std::filesystem::path& path);

struct SplitSet {
  HiddenStateDataset calibration;
  HiddenStateDataset tuning;
  HiddenStateDataset evaluation;
};

struct Violation {
  std::string split;
  /// "-" when the rule concerns the whole split.
  std::string example_id;
  std::string rule;

  std::string to_string() const;
};

/// Empty iff calibration is label-0 only and all splits agree on layers,
/// hidden dim and pooling.
std::vector<Violation> validate(const SplitSet& splits);

struct SynthConfig {
  std::size_t num_layers = 4;
  std::size_t hidden_dim = 16;
  std::size_t n_cal = 20;
  std::size_t n_tune_in = 10;
  std::size_t n_tune_out = 10;
  std::size_t n_eval_in = 10;
  std::size_t n_eval_out = 10;
  /// Per-layer shift of the out-of-context mean, in standard deviations.
  std::vector<double> separations;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic in `config`. In-context vectors are N(0, I); out-of-context
/// vectors at layer l are N(sep_l * u_l, I) with u_l = planted_direction(seed, l).
SplitSet synth_generate(const SynthConfig& config);

/// Unit vector along which layer `layer` is shifted for out-of-context rows.
std::vector<double> planted_direction(std::uint64_t seed, std::size_t layer,
                                      std::size_t hidden_dim);

/// First layer with the maximal separation.
std::size_t planted_best_layer(const SynthConfig& config);

struct ManifestEntry {
  std::string id;
  std::string split;
  Label label = Label::in_context;
  std::optional<std::string> text;
};

/// JSON manifest tying three HSD1 files together. Split paths are resolved
/// relative to the manifest's directory.
struct Manifest {
  std::string calibration_path;
  std::string tuning_path;
  std::string evaluation_path;
  std::optional<std::string> model_id;
  Pooling pooling = Pooling::last_token;
  std::vector<ManifestEntry> examples;
  std::vector<std::string> warnings;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Reads the manifest and its three HSD1 files. Throws FormatError when a
/// file's pooling disagrees with the manifest.
SplitSet load_splits(const std::filesystem::path& manifest_path);

/// Writes calibration.hsd, tuning.hsd, evaluation.hsd and manifest.json under
/// `directory` (created if missing). Returns the manifest path.
std::filesystem::path save_splits(const SplitSet& splits,
                                  const std::filesystem::path& directory,
                                  std::optional<std::string> model_id = std::nullopt);

/// Manifest entries that name unknown ids or disagree on split or label.
std::vector<Violation> validate_manifest(const Manifest& manifest,
                                         const SplitSet& splits);

}  // namespace ctxprobe
