#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fscil/embedding_set.hpp"

namespace fscil {

// FCAE layout, little-endian throughout:
//   "FCAE" | version u32 | dim u32 | count u64 | checksum u64
//   count x ( sample_id u64 | class_id u32 | dim x f32 )
// The checksum is 64-bit FNV-1a over every record byte.
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::size_t kArchiveHeaderBytes = 28;

struct SessionSplit {
  std::vector<SampleId> train;
  std::vector<SampleId> test;

  friend bool operator==(const SessionSplit&, const SessionSplit&) = default;
};

struct ArchiveManifest {
  std::uint32_t version = kArchiveVersion;
  std::size_t dim = 0;
  std::map<ClassId, std::string> classes;
  std::vector<SessionSplit> sessions;
  std::string provenance;

  friend bool operator==(const ArchiveManifest&, const ArchiveManifest&) = default;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

/// Sidecar path: "runs/data.fcae" -> "runs/data.manifest.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& archive);

nlohmann::json manifest_to_json(const ArchiveManifest& m);
ArchiveManifest manifest_from_json(const nlohmann::json& j);

/// Label set of every session: classes of its train and test samples.
std::vector<std::vector<ClassId>> session_label_sets(const EmbeddingSet& set,
                                                     const ArchiveManifest& manifest);

/// Throws ValidationError (dim mismatch, unknown or repeated sample ids,
/// uncatalogued classes) or DisjointnessError (shared labels across sessions).
void validate_archive(const EmbeddingSet& set, const ArchiveManifest& manifest);

/// Serialized FCAE bytes for the set, 32-bit values.
std::vector<std::uint8_t> encode_payload(const EmbeddingSet& set);
/// Parses FCAE bytes; throws the specific FormatError subclass on damage.
EmbeddingSet decode_payload(std::span<const std::uint8_t> bytes);

/// Validates, then writes archive and manifest (each via temp file + rename).
void write_archive(const EmbeddingSet& set, const ArchiveManifest& manifest,
                   const std::filesystem::path& path);

struct Archive {
  EmbeddingSet set;
  ArchiveManifest manifest;
};

Archive read_archive(const std::filesystem::path& path);

/// Writes bytes to path through a sibling temp file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace fscil
