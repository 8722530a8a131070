#include <gtest/gtest.h>

#include <cstring>

#include "fscil/archive.hpp"
#include "fscil/errors.hpp"
#include "fscil/synthetic.hpp"
#include "support.hpp"

namespace fscil {
namespace {

ArchiveManifest single_session_manifest(const EmbeddingSet& set) {
  ArchiveManifest m;
  m.dim = set.dim();
  SessionSplit split;
  for (const auto& r : set.records()) {
    m.classes[r.class_id] = "class_" + std::to_string(r.class_id);
    (r.sample_id % 2 == 0 ? split.train : split.test).push_back(r.sample_id);
  }
  m.sessions.push_back(split);
  m.provenance = "unit test";
  return m;
}

float to_f32(double x) { return static_cast<float>(x); }

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(fnv1a64(a), 0xaf63dc4c8601ec8cULL);
  const std::string foobar = "foobar";
  EXPECT_EQ(fnv1a64({reinterpret_cast<const std::uint8_t*>(foobar.data()), foobar.size()}),
            0x85944171f73967e8ULL);
}

TEST(Payload, HeaderLayout) {
  EmbeddingSet set(3);
  set.add(0x0102030405060708ULL, 9, DenseVector{1.0, -2.0, 0.5});
  const auto bytes = encode_payload(set);
  ASSERT_EQ(bytes.size(), kArchiveHeaderBytes + 8 + 4 + 3 * 4);
  EXPECT_EQ(std::memcmp(bytes.data(), "FCAE", 4), 0);
  std::uint32_t version = 0, dim = 0, cls = 0;
  std::uint64_t count = 0, id = 0;
  float v1 = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&dim, bytes.data() + 8, 4);
  std::memcpy(&count, bytes.data() + 12, 8);
  std::memcpy(&id, bytes.data() + 28, 8);
  std::memcpy(&cls, bytes.data() + 36, 4);
  std::memcpy(&v1, bytes.data() + 44, 4);
  EXPECT_EQ(version, kArchiveVersion);
  EXPECT_EQ(dim, 3u);
  EXPECT_EQ(count, 1u);
  EXPECT_EQ(id, 0x0102030405060708ULL);
  EXPECT_EQ(cls, 9u);
  EXPECT_EQ(v1, -2.0f);
  std::uint64_t checksum = 0;
  std::memcpy(&checksum, bytes.data() + 20, 8);
  EXPECT_EQ(checksum, fnv1a64(std::span(bytes).subspan(kArchiveHeaderBytes)));
}

TEST(Payload, EmptyRoundTrip) {
  const EmbeddingSet empty(4);
  const auto back = decode_payload(encode_payload(empty));
  EXPECT_TRUE(back.empty());
  EXPECT_EQ(back.dim(), 4u);
}

TEST(Archive, RoundTripQuantizesToFloat32) {
  Rng rng(11);
  const auto set = testing::random_set(10, 10, 7, rng);
  testing::TempDir dir;
  const auto path = dir / "data.fcae";
  const auto manifest = single_session_manifest(set);
  write_archive(set, manifest, path);
  EXPECT_TRUE(std::filesystem::exists(manifest_path_for(path)));
  const auto back = read_archive(path);
  EXPECT_EQ(back.manifest, manifest);
  ASSERT_EQ(back.set.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(back.set[i].sample_id, set[i].sample_id);
    EXPECT_EQ(back.set[i].class_id, set[i].class_id);
    for (std::size_t j = 0; j < set.dim(); ++j) {
      EXPECT_EQ(back.set[i].vector[j], static_cast<double>(to_f32(set[i].vector[j])));
    }
  }
  // A second write of the quantized set is byte-stable.
  const auto again = dir / "again.fcae";
  write_archive(back.set, back.manifest, again);
  EXPECT_EQ(testing::slurp(path), testing::slurp(again));
}

TEST(Archive, ManifestPath) {
  EXPECT_EQ(manifest_path_for("runs/data.fcae"), std::filesystem::path("runs/data.manifest.json"));
}

TEST(Archive, DamageIsClassified) {
  Rng rng(12);
  const auto set = testing::random_set(3, 4, 5, rng);
  const auto good = encode_payload(set);
  ASSERT_NO_THROW(decode_payload(good));

  auto flipped = good;
  flipped[kArchiveHeaderBytes + 13] ^= 0x01;
  EXPECT_THROW(decode_payload(flipped), ChecksumMismatchError);

  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_payload(magic), BadMagicError);

  auto version = good;
  version[4] = 2;
  EXPECT_THROW(decode_payload(version), UnsupportedVersionError);

  for (std::size_t len : {std::size_t{2}, std::size_t{20}, good.size() - 1}) {
    EXPECT_THROW(decode_payload(std::span(good).first(len)), TruncatedArchiveError) << len;
  }

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_payload(trailing), FormatError);
}

TEST(Archive, MissingFileIsIoError) {
  testing::TempDir dir;
  EXPECT_THROW(read_archive(dir / "absent.fcae"), IoError);
}

TEST(Archive, ValidationRules) {
  Rng rng(13);
  const auto set = testing::random_set(4, 4, 3, rng);
  const auto good = single_session_manifest(set);
  EXPECT_NO_THROW(validate_archive(set, good));

  auto missing = good;
  missing.sessions[0].test.push_back(999);
  EXPECT_THROW(validate_archive(set, missing), ValidationError);

  auto twice = good;
  twice.sessions[0].test.push_back(twice.sessions[0].train.front());
  EXPECT_THROW(validate_archive(set, twice), ValidationError);

  auto dim = good;
  dim.dim = 4;
  EXPECT_THROW(validate_archive(set, dim), ValidationError);

  auto uncatalogued = good;
  uncatalogued.classes.erase(2);
  EXPECT_THROW(validate_archive(set, uncatalogued), ValidationError);

  // Class 3 split between two sessions.
  auto shared = good;
  SessionSplit second;
  for (auto it = shared.sessions[0].test.begin(); it != shared.sessions[0].test.end();) {
    if (*it / 4 == 3) {
      second.test.push_back(*it);
      it = shared.sessions[0].test.erase(it);
    } else {
      ++it;
    }
  }
  shared.sessions.push_back(second);
  EXPECT_THROW(validate_archive(set, shared), DisjointnessError);

  testing::TempDir dir;
  EXPECT_THROW(write_archive(set, shared, dir / "x.fcae"), DisjointnessError);
  EXPECT_FALSE(std::filesystem::exists(dir / "x.fcae"));
}

TEST(Manifest, JsonRoundTripAndStrictness) {
  Rng rng(14);
  const auto set = testing::random_set(2, 2, 2, rng);
  const auto m = single_session_manifest(set);
  EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);

  auto extra = manifest_to_json(m);
  extra["comment"] = "x";
  EXPECT_THROW(manifest_from_json(extra), FormatError);

  auto bad_key = manifest_to_json(m);
  bad_key["classes"]["one"] = "x";
  EXPECT_THROW(manifest_from_json(bad_key), FormatError);

  auto future = manifest_to_json(m);
  future["version"] = 9;
  EXPECT_THROW(manifest_from_json(future), UnsupportedVersionError);

  EXPECT_THROW(manifest_from_json(nlohmann::json::array()), FormatError);
}

TEST(Manifest, SessionLabelSets) {
  Rng rng(15);
  const auto set = testing::random_set(4, 2, 2, rng);
  ArchiveManifest m;
  m.dim = 2;
  for (ClassId c = 0; c < 4; ++c) m.classes[c] = "c";
  m.sessions = {{{0, 1, 2}, {3}}, {{4, 6}, {5, 7}}};
  const auto labels = session_label_sets(set, m);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0], (std::vector<ClassId>{0, 1}));
  EXPECT_EQ(labels[1], (std::vector<ClassId>{2, 3}));
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_classes = 20;
  s.samples_per_class = 20;
  s.dim = 64;
  s.intra_class_noise = 0.05;
  s.seed = 5;
  s.rule = CenterRule::orthogonal;
  s.base_classes = 10;
  s.n_way = 5;
  return s;
}

EmbeddingSet session_part(const Archive& a, bool train) {
  std::vector<SampleId> ids;
  for (const auto& s : a.manifest.sessions) {
    const auto& part = train ? s.train : s.test;
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return a.set.subset(ids);
}

TEST(Synthetic, LayoutAndSeparability) {
  const auto a = generate_synthetic(small_spec());
  EXPECT_NO_THROW(validate_archive(a.set, a.manifest));
  EXPECT_EQ(a.set.size(), 400u);
  ASSERT_EQ(a.manifest.sessions.size(), 3u);
  const auto labels = session_label_sets(a.set, a.manifest);
  EXPECT_EQ(labels[0].size(), 10u);
  EXPECT_EQ(labels[1].size(), 5u);
  for (const auto& r : a.set.records()) {
    EXPECT_EQ(r.sample_id / 20, r.class_id);
    double n2 = 0;
    for (double v : r.vector.values()) n2 += v * v;
    EXPECT_NEAR(n2, 1.0, 1e-6);  // float32 storage
  }
  EXPECT_GE(testing::oracle_ncm_accuracy(session_part(a, true), session_part(a, false)), 99.0);
}

TEST(Synthetic, ZeroNoiseSamplesAreCenters) {
  auto spec = small_spec();
  spec.intra_class_noise = 0.0;
  spec.rule = CenterRule::random;
  const auto a = generate_synthetic(spec);
  for (const auto& [id, idx] : a.set.indices_by_class()) {
    for (std::size_t i : idx) EXPECT_EQ(a.set[i].vector, a.set[idx.front()].vector);
  }
  EXPECT_EQ(testing::oracle_ncm_accuracy(session_part(a, true), session_part(a, false)), 100.0);
}

TEST(Synthetic, DeterministicBytes) {
  testing::TempDir dir;
  write_archive(generate_synthetic(small_spec()).set, generate_synthetic(small_spec()).manifest,
                dir / "a.fcae");
  const auto b = generate_synthetic(small_spec());
  write_archive(b.set, b.manifest, dir / "b.fcae");
  EXPECT_EQ(testing::slurp(dir / "a.fcae"), testing::slurp(dir / "b.fcae"));
  EXPECT_EQ(testing::slurp(dir / "a.manifest.json"), testing::slurp(dir / "b.manifest.json"));
  auto other = small_spec();
  other.seed = 6;
  write_archive(generate_synthetic(other).set, generate_synthetic(other).manifest, dir / "c.fcae");
  EXPECT_NE(testing::slurp(dir / "a.fcae"), testing::slurp(dir / "c.fcae"));
}

TEST(Synthetic, Infeasible) {
  auto spec = small_spec();
  spec.num_classes = 100;
  spec.dim = 8;
  EXPECT_THROW(generate_synthetic(spec), GenerationError);
  spec = small_spec();
  spec.base_classes = 12;  // 8 incremental classes do not split into 5-way groups
  EXPECT_THROW(generate_synthetic(spec), ArgumentError);
  spec = small_spec();
  spec.samples_per_class = 0;
  EXPECT_THROW(generate_synthetic(spec), ArgumentError);
  EXPECT_THROW(parse_center_rule("spiral"), ArgumentError);
}

}  // namespace
}  // namespace fscil
