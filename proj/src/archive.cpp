#include "fscil/archive.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "fscil/errors.hpp"

namespace fscil {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

std::size_t record_bytes(std::size_t dim) { return 8 + 4 + 4 * dim; }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return bytes;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& archive) {
  auto p = archive;
  p.replace_extension(".manifest.json");
  return p;
}

nlohmann::json manifest_to_json(const ArchiveManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["dim"] = m.dim;
  auto& classes = j["classes"] = nlohmann::json::object();
  for (const auto& [id, name] : m.classes) classes[std::to_string(id)] = name;
  auto& sessions = j["sessions"] = nlohmann::json::array();
  for (const auto& s : m.sessions) sessions.push_back({{"train", s.train}, {"test", s.test}});
  j["provenance"] = m.provenance;
  return j;
}

ArchiveManifest manifest_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"version", "dim", "classes", "sessions", "provenance"};
  try {
    if (!j.is_object()) throw FormatError("manifest is not a json object");
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw FormatError("unknown manifest field '" + key + "'");
    }
    ArchiveManifest m;
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != kArchiveVersion) {
      throw UnsupportedVersionError("manifest version " + std::to_string(m.version));
    }
    m.dim = j.at("dim").get<std::size_t>();
    for (const auto& [key, name] : j.at("classes").items()) {
      std::size_t used = 0;
      const unsigned long id = std::stoul(key, &used);
      if (used != key.size()) throw FormatError("class key '" + key + "' is not an integer");
      m.classes[static_cast<ClassId>(id)] = name.get<std::string>();
    }
    for (const auto& s : j.at("sessions")) {
      m.sessions.push_back({s.at("train").get<std::vector<SampleId>>(),
                            s.at("test").get<std::vector<SampleId>>()});
    }
    m.provenance = j.at("provenance").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("class key is not an integer");
  } catch (const std::out_of_range&) {
    throw FormatError("class key out of range");
  }
}

std::vector<std::vector<ClassId>> session_label_sets(const EmbeddingSet& set,
                                                     const ArchiveManifest& manifest) {
  std::map<SampleId, ClassId> label_of;
  for (const auto& r : set.records()) label_of[r.sample_id] = r.class_id;
  std::vector<std::vector<ClassId>> out;
  for (std::size_t s = 0; s < manifest.sessions.size(); ++s) {
    std::set<ClassId> labels;
    for (const auto* ids : {&manifest.sessions[s].train, &manifest.sessions[s].test}) {
      for (SampleId id : *ids) {
        auto it = label_of.find(id);
        if (it == label_of.end()) {
          throw ValidationError("session " + std::to_string(s) + " references missing sample " +
                                std::to_string(id));
        }
        labels.insert(it->second);
      }
    }
    out.emplace_back(labels.begin(), labels.end());
  }
  return out;
}

void validate_archive(const EmbeddingSet& set, const ArchiveManifest& manifest) {
  if (manifest.version != kArchiveVersion) {
    throw ValidationError("manifest version " + std::to_string(manifest.version));
  }
  if (!set.empty() && manifest.dim != set.dim()) {
    throw ValidationError("manifest dim " + std::to_string(manifest.dim) + " vs payload dim " +
                          std::to_string(set.dim()));
  }
  if (!manifest.classes.empty()) {
    for (ClassId id : set.class_ids()) {
      if (!manifest.classes.count(id)) {
        throw ValidationError("class " + std::to_string(id) + " is missing from the catalog");
      }
    }
  }
  std::set<SampleId> referenced;
  for (const auto& s : manifest.sessions) {
    for (const auto* ids : {&s.train, &s.test}) {
      for (SampleId id : *ids) {
        if (!referenced.insert(id).second) {
          throw ValidationError("sample " + std::to_string(id) + " is referenced twice");
        }
      }
    }
  }
  const auto labels = session_label_sets(set, manifest);
  std::map<ClassId, std::size_t> owner;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    for (ClassId c : labels[s]) {
      auto [it, fresh] = owner.emplace(c, s);
      if (!fresh) {
        throw DisjointnessError("class " + std::to_string(c) + " appears in sessions " +
                                std::to_string(it->second) + " and " + std::to_string(s));
      }
    }
  }
}

std::vector<std::uint8_t> encode_payload(const EmbeddingSet& set) {
  const std::size_t dim = set.dim();
  std::vector<std::uint8_t> records;
  records.reserve(set.size() * record_bytes(dim));
  for (const auto& r : set.records()) {
    put_u64(records, r.sample_id);
    put_u32(records, r.class_id);
    for (double v : r.vector.values()) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) {
        throw ValidationError("sample " + std::to_string(r.sample_id) +
                              " does not fit in 32-bit floats");
      }
      put_u32(records, std::bit_cast<std::uint32_t>(f));
    }
  }
  std::vector<std::uint8_t> out{'F', 'C', 'A', 'E'};
  put_u32(out, kArchiveVersion);
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u64(out, set.size());
  put_u64(out, fnv1a64(records));
  out.insert(out.end(), records.begin(), records.end());
  return out;
}

EmbeddingSet decode_payload(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw TruncatedArchiveError("file shorter than the magic");
  if (std::memcmp(bytes.data(), "FCAE", 4) != 0) throw BadMagicError("magic is not FCAE");
  if (bytes.size() < kArchiveHeaderBytes) throw TruncatedArchiveError("header is truncated");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kArchiveVersion) {
    throw UnsupportedVersionError("archive version " + std::to_string(version));
  }
  const std::size_t dim = get_u32(bytes, 8);
  const std::uint64_t count = get_u64(bytes, 12);
  const std::uint64_t checksum = get_u64(bytes, 20);
  if (dim == 0 && count > 0) throw FormatError("archive has records of dim 0");
  const std::size_t body = bytes.size() - kArchiveHeaderBytes;
  const std::size_t per_record = record_bytes(dim);
  if (count > body / per_record || body < count * per_record) {
    throw TruncatedArchiveError("payload holds " + std::to_string(body) + " bytes for " +
                                std::to_string(count) + " records");
  }
  if (body != count * per_record) throw FormatError("trailing bytes after the last record");
  const auto payload = bytes.subspan(kArchiveHeaderBytes);
  if (fnv1a64(payload) != checksum) throw ChecksumMismatchError("record checksum mismatch");

  EmbeddingSet set(dim);
  std::size_t at = 0;
  std::vector<double> values(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const SampleId sample = get_u64(payload, at);
    const ClassId label = get_u32(payload, at + 8);
    at += 12;
    for (std::size_t j = 0; j < dim; ++j, at += 4) {
      values[j] = static_cast<double>(std::bit_cast<float>(get_u32(payload, at)));
      if (!std::isfinite(values[j])) {
        throw FormatError("sample " + std::to_string(sample) + " has a non-finite value");
      }
    }
    try {
      set.add(sample, label, DenseVector(values));
    } catch (const ArgumentError& e) {
      throw FormatError(e.what());
    }
  }
  return set;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_archive(const EmbeddingSet& set, const ArchiveManifest& manifest,
                   const std::filesystem::path& path) {
  validate_archive(set, manifest);
  const auto payload = encode_payload(set);
  const auto manifest_text = manifest_to_json(manifest).dump(2) + "\n";
  write_file_atomic(path, payload);
  write_file_atomic(manifest_path_for(path), manifest_text);
}

Archive read_archive(const std::filesystem::path& path) {
  auto set = decode_payload(read_file(path));
  const auto manifest_bytes = read_file(manifest_path_for(path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid json: ") + e.what());
  }
  auto manifest = manifest_from_json(j);
  validate_archive(set, manifest);
  return {std::move(set), std::move(manifest)};
}

}  // namespace fscil
