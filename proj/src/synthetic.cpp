#include "fscil/synthetic.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "fscil/errors.hpp"
#include "fscil/linalg.hpp"
#include "fscil/rng.hpp"

namespace fscil {
namespace {

std::vector<double> gaussian(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.standard_normal();
  return v;
}

bool normalize(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (!(n > 1e-12)) return false;
  for (double& x : v) x /= n;
  return true;
}

std::vector<std::vector<double>> random_centers(const SyntheticSpec& spec, Rng& rng) {
  std::vector<std::vector<double>> centers;
  while (centers.size() < spec.num_classes) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_center_attempts && !placed; ++attempt) {
      auto c = gaussian(spec.dim, rng);
      if (!normalize(c)) continue;
      placed = true;
      for (const auto& other : centers) {
        if (dot(c, other) >= 0.5) {
          placed = false;
          break;
        }
      }
      if (placed) centers.push_back(std::move(c));
    }
    if (!placed) {
      throw GenerationError("could not place center " + std::to_string(centers.size()) + " of " +
                            std::to_string(spec.num_classes) + " in dim " +
                            std::to_string(spec.dim) + " with pairwise cosine < 0.5");
    }
  }
  return centers;
}

std::vector<std::vector<double>> orthogonal_centers(const SyntheticSpec& spec, Rng& rng) {
  if (spec.num_classes > spec.dim) {
    throw GenerationError("orthogonal rule needs num_classes <= dim (" +
                          std::to_string(spec.num_classes) + " > " + std::to_string(spec.dim) + ")");
  }
  std::vector<std::vector<double>> basis;
  std::size_t attempts = 0;
  while (basis.size() < spec.num_classes) {
    if (++attempts > spec.max_center_attempts) throw GenerationError("Gram-Schmidt did not converge");
    auto v = gaussian(spec.dim, rng);
    // Two passes of modified Gram-Schmidt keep the basis orthogonal to rounding.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        const double proj = dot(v, b);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= proj * b[j];
      }
    }
    if (normalize(v)) basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace

CenterRule parse_center_rule(const std::string& name) {
  if (name == "random") return CenterRule::random;
  if (name == "orthogonal") return CenterRule::orthogonal;
  throw ArgumentError("unknown center rule '" + name + "'");
}

const char* center_rule_name(CenterRule rule) {
  return rule == CenterRule::random ? "random" : "orthogonal";
}

void SyntheticSpec::validate() const {
  if (num_classes == 0) throw ArgumentError("synthetic spec needs at least one class");
  if (samples_per_class == 0) throw ArgumentError("synthetic spec needs samples_per_class >= 1");
  if (dim == 0) throw ArgumentError("synthetic spec needs dim >= 1");
  if (!(intra_class_noise >= 0.0) || !std::isfinite(intra_class_noise)) {
    throw ArgumentError("intra_class_noise must be finite and >= 0");
  }
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw ArgumentError("test_fraction must lie in [0, 1]");
  }
  if (base_classes > num_classes) throw ArgumentError("base_classes exceeds num_classes");
  if (base_classes != 0 && base_classes < num_classes) {
    if (n_way == 0) throw ArgumentError("n_way must be >= 1");
    if ((num_classes - base_classes) % n_way != 0) {
      throw ArgumentError(std::to_string(num_classes - base_classes) +
                          " incremental classes do not split into " + std::to_string(n_way) +
                          "-way sessions");
    }
  }
}

Archive generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  Rng center_rng = root.split("synthetic/centers");
  Rng sample_rng = root.split("synthetic/samples");
  const auto centers = spec.rule == CenterRule::orthogonal ? orthogonal_centers(spec, center_rng)
                                                           : random_centers(spec, center_rng);

  const auto train_count = static_cast<std::size_t>(
      std::llround((1.0 - spec.test_fraction) * static_cast<double>(spec.samples_per_class)));
  const std::size_t base = spec.base_classes == 0 ? spec.num_classes : spec.base_classes;
  const std::size_t sessions = 1 + (spec.num_classes - base) / (base == spec.num_classes ? 1 : spec.n_way);

  Archive out{EmbeddingSet(spec.dim), {}};
  out.manifest.dim = spec.dim;
  out.manifest.sessions.resize(sessions);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto class_id = static_cast<ClassId>(c);
    out.manifest.classes[class_id] = "class_" + std::to_string(c);
    const std::size_t session = c < base ? 0 : 1 + (c - base) / spec.n_way;
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      std::vector<double> x;
      do {
        x = centers[c];
        for (double& v : x) v += spec.intra_class_noise * sample_rng.standard_normal();
      } while (!normalize(x));
      const SampleId id = c * spec.samples_per_class + i;
      out.set.add(id, class_id, DenseVector(std::move(x)));
      (i < train_count ? out.manifest.sessions[session].train : out.manifest.sessions[session].test)
          .push_back(id);
    }
  }
  std::ostringstream prov;
  prov << "synthetic rule=" << center_rule_name(spec.rule) << " classes=" << spec.num_classes
       << " per_class=" << spec.samples_per_class << " dim=" << spec.dim
       << " noise=" << spec.intra_class_noise << " seed=" << spec.seed;
  out.manifest.provenance = prov.str();
  return out;
}

}  // namespace fscil
