// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/archspec.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <set>

#include "gammaguard/json_out.hpp"
#include "json.hpp"

namespace gammaguard {

using nlohmann::json;

std::string_view to_string(Style style) {
  switch (style) {
    case Style::V1: return "v1";
    case Style::PreAct: return "preact";
    case Style::Transformer: return "transformer";
  }
  return "?";
}

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Basic: return "basic";
    case BlockKind::Bottleneck: return "bottleneck";
    case BlockKind::TxBlock: return "txblock";
  }
  return "?";
}

Style style_from_string(std::string_view text) {
  if (text == "v1") return Style::V1;
  if (text == "preact") return Style::PreAct;
  if (text == "transformer") return Style::Transformer;
  throw std::invalid_argument("unknown style '" + std::string(text) + "'");
}

BlockKind block_kind_from_string(std::string_view text) {
  if (text == "basic") return BlockKind::Basic;
  if (text == "bottleneck") return BlockKind::Bottleneck;
  if (text == "txblock") return BlockKind::TxBlock;
  throw std::invalid_argument("unknown block kind '" + std::string(text) + "'");
}

std::size_t branch_norm_count(BlockKind kind) {
  return kind == BlockKind::Bottleneck ? 3 : 2;
}

std::size_t ArchSpec::block_count() const {
  std::size_t n = 0;
  for (const auto& st : stages) n += st.blocks.size();
  return n;
}

// ---------------------------------------------------------------------------
// ParamPath

std::string ParamPath::str() const {
  switch (kind) {
    case Kind::Stem: return "stem.norm.gamma";
    case Kind::Final: return "final.norm.gamma";
    case Kind::Down:
      return "stage" + std::to_string(stage) + ".block" + std::to_string(block) +
             ".down.norm.gamma";
    case Kind::Branch:
      return "stage" + std::to_string(stage) + ".block" + std::to_string(block) + ".norm" +
             std::to_string(norm) + ".gamma";
  }
  return {};
}

namespace {

// Consumes `prefix` followed by a non-negative decimal index.
bool take_index(std::string_view& text, std::string_view prefix, int& out) {
  if (text.substr(0, prefix.size()) != prefix) return false;
  text.remove_prefix(prefix.size());
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr == first || out < 0) return false;
  // No leading zeros, so every index has exactly one spelling.
  if (*first == '0' && ptr - first > 1) return false;
  text.remove_prefix(static_cast<std::size_t>(ptr - first));
  return true;
}

bool take(std::string_view& text, std::string_view lit) {
  if (text.substr(0, lit.size()) != lit) return false;
  text.remove_prefix(lit.size());
  return true;
}

}  // namespace

ParamPath ParamPath::parse(std::string_view text) {
  const auto bad = [&] {
    return std::invalid_argument("malformed parameter path '" + std::string(text) + "'");
  };
  if (text == "stem.norm.gamma") return stem_norm();
  if (text == "final.norm.gamma") return final_norm();
  std::string_view rest = text;
  int s = 0;
  int b = 0;
  if (!take_index(rest, "stage", s) || !take_index(rest, ".block", b)) throw bad();
  if (rest == ".down.norm.gamma") return down_norm(s, b);
  int k = 0;
  if (!take_index(rest, ".norm", k) || !take(rest, ".gamma") || !rest.empty()) throw bad();
  return branch_norm(s, b, k);
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::string block_where(std::size_t s, std::size_t b) {
  return "stages[" + std::to_string(s) + "].blocks[" + std::to_string(b) + "]";
}

void check_gamma(double g, const std::string& where) {
  if (!std::isfinite(g)) throw SpecError(where, "gamma must be finite");
  if (g < 0.0) throw SpecError(where, "gamma must be nonnegative, got " + format_number(g));
}

}  // namespace

void validate(const ArchSpec& spec) {
  if (spec.name.empty()) throw SpecError("name", "must be a non-empty string");
  if (spec.width <= 0) throw SpecError("width", "must be a positive integer");
  if (spec.stem.has_norm && !(std::isfinite(spec.stem.gamma0) && spec.stem.gamma0 > 0.0)) {
    throw SpecError("stem.gamma0", "must be > 0 when the stem has a norm");
  }
  if (spec.style == Style::PreAct && spec.stem.has_norm) {
    throw SpecError("stem.has_norm", "a preact stem carries no normalization layer");
  }
  if (spec.final_norm_gamma) {
    if (spec.style != Style::Transformer) {
      throw SpecError("final_norm", "only transformer specs have a final norm");
    }
    check_gamma(*spec.final_norm_gamma, "final_norm.gamma");
  }
  if (spec.stages.empty()) throw SpecError("stages", "at least one stage is required");

  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& blocks = spec.stages[s].blocks;
    if (blocks.empty()) {
      throw SpecError("stages[" + std::to_string(s) + "]", "at least one block is required");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const BlockSpec& blk = blocks[b];
      const std::string where = block_where(s, b);
      const bool tx = blk.kind == BlockKind::TxBlock;
      if (tx != (spec.style == Style::Transformer)) {
        throw SpecError(where, "block kind '" + std::string(to_string(blk.kind)) +
                                   "' does not match style '" +
                                   std::string(to_string(spec.style)) + "'");
      }
      if (blk.branch_gammas.size() != branch_norm_count(blk.kind)) {
        throw SpecError(where + ".branch_gammas",
                        std::string(to_string(blk.kind)) + " blocks need exactly " +
                            std::to_string(branch_norm_count(blk.kind)) + " gammas");
      }
      for (std::size_t k = 0; k < blk.branch_gammas.size(); ++k) {
        check_gamma(blk.branch_gammas[k], where + ".branch_gammas[" + std::to_string(k) + "]");
      }
      if (blk.downsample && spec.style == Style::Transformer) {
        throw SpecError(where, "transformer blocks cannot downsample");
      }
      const bool needs_down = blk.downsample && spec.style == Style::V1;
      if (needs_down && !blk.gamma_down) {
        throw SpecError(where, "downsampling v1 block is missing gamma_down");
      }
      if (!needs_down && blk.gamma_down) {
        throw SpecError(where, "gamma_down is only allowed on downsampling v1 blocks");
      }
      if (blk.gamma_down) check_gamma(*blk.gamma_down, where + ".gamma_down");
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto k : allowed) ok = ok || it.key() == k;
    if (!ok) throw SpecError(where, "unknown key '" + it.key() + "'");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SpecError(where, std::string("missing key '") + key + "'");
  return *it;
}

const json& require_object(const json& v, const std::string& where) {
  if (!v.is_object()) throw SpecError(where, "expected an object");
  return v;
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw SpecError(where, "expected a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw SpecError(where, "expected a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw SpecError(where, "expected a string");
  return v.get<std::string>();
}

BlockSpec parse_block(const json& v, const std::string& where) {
  require_object(v, where);
  reject_unknown_keys(v, {"kind", "downsample", "branch_gammas", "gamma_down"}, where);
  BlockSpec blk;
  try {
    blk.kind = block_kind_from_string(as_string(require(v, "kind", where), where + ".kind"));
  } catch (const std::invalid_argument& e) {
    throw SpecError(where + ".kind", e.what());
  }
  blk.downsample = as_bool(require(v, "downsample", where), where + ".downsample");
  const json& gammas = require(v, "branch_gammas", where);
  if (!gammas.is_array()) throw SpecError(where + ".branch_gammas", "expected an array");
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    blk.branch_gammas.push_back(
        as_number(gammas[k], where + ".branch_gammas[" + std::to_string(k) + "]"));
  }
  if (auto it = v.find("gamma_down"); it != v.end()) {
    blk.gamma_down = as_number(*it, where + ".gamma_down");
  }
  return blk;
}

}  // namespace

ArchSpec parse_arch(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  require_object(doc, "$");
  reject_unknown_keys(doc, {"name", "style", "width", "stem", "stages", "final_norm"}, "$");

  ArchSpec spec;
  spec.name = as_string(require(doc, "name", "$"), "name");
  try {
    spec.style = style_from_string(as_string(require(doc, "style", "$"), "style"));
  } catch (const std::invalid_argument& e) {
    throw SpecError("style", e.what());
  }
  const json& width = require(doc, "width", "$");
  if (!width.is_number_integer()) throw SpecError("width", "expected an integer");
  const auto w = width.get<long long>();
  if (w <= 0 || w > (1 << 20)) throw SpecError("width", "out of range");
  spec.width = static_cast<int>(w);

  const json& stem = require_object(require(doc, "stem", "$"), "stem");
  reject_unknown_keys(stem, {"has_norm", "gamma0"}, "stem");
  spec.stem.has_norm = as_bool(require(stem, "has_norm", "stem"), "stem.has_norm");
  spec.stem.gamma0 = as_number(require(stem, "gamma0", "stem"), "stem.gamma0");

  const json& stages = require(doc, "stages", "$");
  if (!stages.is_array()) throw SpecError("stages", "expected an array");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string where = "stages[" + std::to_string(s) + "]";
    require_object(stages[s], where);
    reject_unknown_keys(stages[s], {"blocks"}, where);
    const json& blocks = require(stages[s], "blocks", where);
    if (!blocks.is_array()) throw SpecError(where + ".blocks", "expected an array");
    StageSpec stage;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      stage.blocks.push_back(parse_block(blocks[b], block_where(s, b)));
    }
    spec.stages.push_back(std::move(stage));
  }

  if (auto it = doc.find("final_norm"); it != doc.end()) {
    require_object(*it, "final_norm");
    reject_unknown_keys(*it, {"gamma"}, "final_norm");
    spec.final_norm_gamma = as_number(require(*it, "gamma", "final_norm"), "final_norm.gamma");
  }

  validate(spec);
  return spec;
}

std::string serialize(const ArchSpec& spec) {
  ordered_json doc;
  doc["name"] = spec.name;
  doc["style"] = std::string(to_string(spec.style));
  doc["width"] = spec.width;
  doc["stem"] = ordered_json{{"has_norm", spec.stem.has_norm}, {"gamma0", spec.stem.gamma0}};
  ordered_json stages = ordered_json::array();
  for (const auto& st : spec.stages) {
    ordered_json blocks = ordered_json::array();
    for (const auto& blk : st.blocks) {
      ordered_json b;
      b["kind"] = std::string(to_string(blk.kind));
      b["downsample"] = blk.downsample;
      b["branch_gammas"] = blk.branch_gammas;
      if (blk.gamma_down) b["gamma_down"] = *blk.gamma_down;
      blocks.push_back(std::move(b));
    }
    stages.push_back(ordered_json{{"blocks", std::move(blocks)}});
  }
  doc["stages"] = std::move(stages);
  if (spec.final_norm_gamma) doc["final_norm"] = ordered_json{{"gamma", *spec.final_norm_gamma}};
  return dump_json(doc);
}

// ---------------------------------------------------------------------------
// Canonical builders

namespace {

ArchSpec make_resnet(std::string name, Style style, BlockKind kind,
                     const std::vector<int>& depths, double g) {
  ArchSpec spec;
  spec.name = std::move(name);
  spec.style = style;
  spec.stem = {style == Style::V1, g};
  for (std::size_t s = 0; s < depths.size(); ++s) {
    StageSpec stage;
    for (int b = 0; b < depths[s]; ++b) {
      BlockSpec blk;
      blk.kind = kind;
      blk.branch_gammas.assign(branch_norm_count(kind), g);
      // Bottleneck stages all open with a projection (channel expansion at stage 0).
      blk.downsample = b == 0 && (s > 0 || kind == BlockKind::Bottleneck);
      if (blk.downsample && style == Style::V1) blk.gamma_down = g;
      stage.blocks.push_back(std::move(blk));
    }
    spec.stages.push_back(std::move(stage));
  }
  return spec;
}

}  // namespace

std::vector<std::string> canonical_names() {
  return {"resnet18", "resnet34", "resnet50", "resnet101",
          "resnet152", "preact18", "preact50", "txstack:N"};
}

ArchSpec build_canonical(std::string_view name, double gamma_init) {
  if (!(std::isfinite(gamma_init) && gamma_init > 0.0)) {
    throw std::invalid_argument("gamma_init must be > 0");
  }
  const std::string n(name);
  const auto B = BlockKind::Basic;
  const auto N = BlockKind::Bottleneck;
  ArchSpec spec;
  if (n == "resnet18") spec = make_resnet(n, Style::V1, B, {2, 2, 2, 2}, gamma_init);
  else if (n == "resnet34") spec = make_resnet(n, Style::V1, B, {3, 4, 6, 3}, gamma_init);
  else if (n == "resnet50") spec = make_resnet(n, Style::V1, N, {3, 4, 6, 3}, gamma_init);
  else if (n == "resnet101") spec = make_resnet(n, Style::V1, N, {3, 4, 23, 3}, gamma_init);
  else if (n == "resnet152") spec = make_resnet(n, Style::V1, N, {3, 8, 36, 3}, gamma_init);
  else if (n == "preact18") spec = make_resnet(n, Style::PreAct, B, {2, 2, 2, 2}, gamma_init);
  else if (n == "preact50") spec = make_resnet(n, Style::PreAct, N, {3, 4, 6, 3}, gamma_init);
  else if (n.rfind("txstack:", 0) == 0) {
    int depth = 0;
    std::string_view digits = std::string_view(n).substr(8);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), depth);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || depth <= 0 || depth > 4096) {
      throw std::invalid_argument("txstack needs a positive block count, e.g. txstack:12");
    }
    spec.name = n;
    spec.style = Style::Transformer;
    spec.stem = {false, gamma_init};
    StageSpec stage;
    stage.blocks.assign(static_cast<std::size_t>(depth),
                        BlockSpec{BlockKind::TxBlock, false, {gamma_init, gamma_init}, {}});
    spec.stages.push_back(std::move(stage));
  } else {
    throw std::invalid_argument("unknown canonical architecture '" + n + "'");
  }
  validate(spec);
  return spec;
}

// ---------------------------------------------------------------------------

std::vector<GammaEntry> enumerate_gammas(const ArchSpec& spec) {
  std::vector<GammaEntry> out;
  if (spec.stem.has_norm) out.push_back({ParamPath::stem_norm(), spec.stem.gamma0});
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& blocks = spec.stages[s].blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const int si = static_cast<int>(s);
      const int bi = static_cast<int>(b);
      for (std::size_t k = 0; k < blocks[b].branch_gammas.size(); ++k) {
        out.push_back({ParamPath::branch_norm(si, bi, static_cast<int>(k)),
                       blocks[b].branch_gammas[k]});
      }
      if (blocks[b].gamma_down) out.push_back({ParamPath::down_norm(si, bi), *blocks[b].gamma_down});
    }
  }
  if (spec.final_norm_gamma) out.push_back({ParamPath::final_norm(), *spec.final_norm_gamma});
  return out;
}

ArchSpec with_gamma(ArchSpec spec, const ParamPath& path, double value) {
  const auto missing = [&] { return std::out_of_range("no gamma at " + path.str()); };
  const auto block = [&]() -> BlockSpec& {
    if (path.stage < 0 || static_cast<std::size_t>(path.stage) >= spec.stages.size()) throw missing();
    auto& blocks = spec.stages[static_cast<std::size_t>(path.stage)].blocks;
    if (path.block < 0 || static_cast<std::size_t>(path.block) >= blocks.size()) throw missing();
    return blocks[static_cast<std::size_t>(path.block)];
  };
  switch (path.kind) {
    case ParamPath::Kind::Stem:
      if (!spec.stem.has_norm) throw missing();
      spec.stem.gamma0 = value;
      break;
    case ParamPath::Kind::Final:
      if (!spec.final_norm_gamma) throw missing();
      spec.final_norm_gamma = value;
      break;
    case ParamPath::Kind::Down: {
      BlockSpec& blk = block();
      if (!blk.gamma_down) throw missing();
      blk.gamma_down = value;
      break;
    }
    case ParamPath::Kind::Branch: {
      BlockSpec& blk = block();
      if (path.norm < 0 || static_cast<std::size_t>(path.norm) >= blk.branch_gammas.size()) {
        throw missing();
      }
      blk.branch_gammas[static_cast<std::size_t>(path.norm)] = value;
      break;
    }
  }
  return spec;
}

}  // namespace gammaguard
