#pragma once

// Canonical JSON for every domain type. nlohmann::json objects keep keys in a
// std::map, so dump() already emits lexicographically sorted keys; absent
// optionals are written as null so every object has a fixed key set.

#include <string>

#include <json.hpp>

#include "memgrain/conflict.hpp"
#include "memgrain/its.hpp"
#include "memgrain/types.hpp"

namespace memgrain {

using Json = nlohmann::json;

// Compact, sorted-key, UTF-8 passthrough.
std::string canonical_dump(const Json& j);

void to_json(Json& j, MemoryType t);
void from_json(const Json& j, MemoryType& t);
void to_json(Json& j, const RecordId& id);
void from_json(const Json& j, RecordId& id);
void to_json(Json& j, const BinaryCode& code);
void from_json(const Json& j, BinaryCode& code);
void to_json(Json& j, const LifecycleChange& c);
void from_json(const Json& j, LifecycleChange& c);
void to_json(Json& j, const MemoryRecord& r);
void from_json(const Json& j, MemoryRecord& r);
void to_json(Json& j, const Session& s);
void from_json(const Json& j, Session& s);
void to_json(Json& j, const BitStats& s);
void from_json(const Json& j, BitStats& s);
void to_json(Json& j, const ConflictCandidate& c);
void from_json(const Json& j, ConflictCandidate& c);
void to_json(Json& j, const Resolution& r);
void from_json(const Json& j, Resolution& r);
void to_json(Json& j, const ConflictRecord& c);
void from_json(const Json& j, ConflictRecord& c);
void to_json(Json& j, const ScoredHit& h);
void from_json(const Json& j, ScoredHit& h);

}  // namespace memgrain
