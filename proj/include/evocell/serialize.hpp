#pragma once

#include <string>

#include <json.hpp>

#include "evocell/arch.hpp"
#include "evocell/errors.hpp"

namespace evocell {

inline constexpr int kArchSchemaVersion = 1;

// Architecture document: {schema_version, identifier, blocks:[...]} with each
// block carrying id, kind, inputs, and the function field its kind needs.
inline nlohmann::json to_json(const Architecture& a) {
  nlohmann::json doc;
  doc["schema_version"] = kArchSchemaVersion;
  doc["identifier"] = a.identifier;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& [id, b] : a.blocks()) {
    nlohmann::json jb;
    jb["id"] = id;
    jb["kind"] = to_string(b.kind);
    if (b.kind == BlockKind::Activation) jb["activation"] = to_string(b.activation);
    if (b.kind == BlockKind::Combination) jb["combination"] = to_string(b.combination);
    jb["inputs"] = b.inputs;
    blocks.push_back(std::move(jb));
  }
  doc["blocks"] = std::move(blocks);
  return doc;
}

inline std::string serialize(const Architecture& a) { return to_json(a).dump(2) + "\n"; }

// Parse failures (malformed JSON, wrong types, bad enum names) raise
// ParseError; structural rule violations raise ValidationError with the first
// few offending rules in the message.
inline Architecture deserialize(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bad architecture document: ") + e.what());
  }
  try {
    if (!doc.is_object()) throw ParseError("architecture document must be an object");
    if (doc.value("schema_version", -1) != kArchSchemaVersion)
      throw ParseError("unsupported or missing schema_version");

    Architecture a;
    a.identifier = doc.at("identifier").get<std::string>();
    for (const auto& jb : doc.at("blocks")) {
      Block b;
      b.id = jb.at("id").get<BlockId>();
      auto kind = parse_block_kind(jb.at("kind").get<std::string>());
      if (!kind) throw ParseError("unknown block kind '" + jb.at("kind").get<std::string>() + "'");
      b.kind = *kind;
      if (b.kind == BlockKind::Activation) {
        auto fn = parse_activation(jb.at("activation").get<std::string>());
        if (!fn) throw ParseError("unknown activation '" + jb.at("activation").get<std::string>() + "'");
        b.activation = *fn;
      }
      if (b.kind == BlockKind::Combination) {
        auto fn = parse_combination(jb.at("combination").get<std::string>());
        if (!fn) throw ParseError("unknown combination '" + jb.at("combination").get<std::string>() + "'");
        b.combination = *fn;
      }
      b.inputs = jb.at("inputs").get<std::vector<BlockId>>();
      a.insert_raw(std::move(b));
    }

    ValidationReport rep = validate(a);
    if (!rep.ok()) {
      std::string msg = "architecture document violates structural rules:";
      std::size_t shown = 0;
      for (const auto& v : rep.violations) {
        if (shown++ == 4) {
          msg += " ...";
          break;
        }
        msg += " [" + v.rule + " @" + std::to_string(v.block) + "]";
      }
      throw ValidationError(msg);
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad architecture document: ") + e.what());
  }
}

}  // namespace evocell
