// SPDX-License-Identifier: Apache-2.0
//
// Block-structured architecture description shared by every other module.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gammaguard {

enum class Style { V1, PreAct, Transformer };

// Basic: 2 norms in the branch. Bottleneck: 3. TxBlock: two residual
// branches with one norm each.
enum class BlockKind { Basic, Bottleneck, TxBlock };

std::string_view to_string(Style style);
std::string_view to_string(BlockKind kind);
Style style_from_string(std::string_view text);
BlockKind block_kind_from_string(std::string_view text);

/// Number of branch norms a block of this kind carries.
std::size_t branch_norm_count(BlockKind kind);

struct StemSpec {
  bool has_norm = true;
  double gamma0 = 1.0;  // ignored when has_norm is false

  bool operator==(const StemSpec&) const = default;
};

struct BlockSpec {
  BlockKind kind = BlockKind::Basic;
  bool downsample = false;
  // Ordered from the first to the last norm in the branch. For a PreAct
  // downsampling block, entry 0 is the norm shared by branch and skip path.
  std::vector<double> branch_gammas;
  // Skip-path norm of a V1 downsampling block.
  std::optional<double> gamma_down;

  double gamma_last() const { return branch_gammas.back(); }

  bool operator==(const BlockSpec&) const = default;
};

struct StageSpec {
  std::vector<BlockSpec> blocks;

  bool operator==(const StageSpec&) const = default;
};

struct ArchSpec {
  std::string name;
  Style style = Style::V1;
  int width = 256;
  StemSpec stem;
  std::vector<StageSpec> stages;
  // Norm between the last block and the head (transformers only).
  std::optional<double> final_norm_gamma;

  std::size_t block_count() const;

  bool operator==(const ArchSpec&) const = default;
};

/// Raised for malformed JSON. `offset()` is the byte position reported by
/// the parser.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Raised when a structurally valid document breaks an ArchSpec invariant.
/// `where()` is a dotted location such as `stages[1].blocks[0]`.
class SpecError : public std::runtime_error {
 public:
  SpecError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Identifies a single gamma parameter.
///
/// Text forms (indices are 0-based):
///   stem.norm.gamma
///   stage{S}.block{B}.norm{K}.gamma
///   stage{S}.block{B}.down.norm.gamma
///   final.norm.gamma
struct ParamPath {
  enum class Kind { Stem, Branch, Down, Final };

  Kind kind = Kind::Stem;
  int stage = 0;
  int block = 0;
  int norm = 0;

  static ParamPath stem_norm() { return {Kind::Stem, 0, 0, 0}; }
  static ParamPath branch_norm(int s, int b, int k) { return {Kind::Branch, s, b, k}; }
  static ParamPath down_norm(int s, int b) { return {Kind::Down, s, b, 0}; }
  static ParamPath final_norm() { return {Kind::Final, 0, 0, 0}; }

  std::string str() const;
  /// Throws std::invalid_argument on anything that is not one of the forms above.
  static ParamPath parse(std::string_view text);

  bool operator==(const ParamPath&) const = default;
};

struct GammaEntry {
  ParamPath path;
  double value = 0.0;
};

/// Checks every ArchSpec invariant; throws SpecError naming the offending location.
void validate(const ArchSpec& spec);

ArchSpec parse_arch(std::string_view text);
std::string serialize(const ArchSpec& spec);

/// Canonical names: resnet18, resnet34, resnet50, resnet101, resnet152,
/// preact18, preact50, txstack:N. Throws std::invalid_argument otherwise.
ArchSpec build_canonical(std::string_view name, double gamma_init);
std::vector<std::string> canonical_names();

/// Stem first, then stages/blocks/norms in index order. The skip-path norm of
/// a V1 downsampling block follows that block's branch norms.
std::vector<GammaEntry> enumerate_gammas(const ArchSpec& spec);

/// Applies `value` to the gamma addressed by `path`. Throws
/// std::out_of_range when the path does not exist in `spec`.
ArchSpec with_gamma(ArchSpec spec, const ParamPath& path, double value);

}  // namespace gammaguard
