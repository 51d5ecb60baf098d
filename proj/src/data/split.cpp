#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "sisc/data.hpp"

namespace sisc {

namespace {

struct Group {
  Label label;
  std::vector<std::size_t> members;
};

const std::string& root_of(const NoduleSample& s) {
  return s.provenance.root.empty() ? s.provenance.id : s.provenance.root;
}

// Lineage groups per class, in order of first appearance. Excluded samples
// belong to no group.
std::array<std::vector<Group>, 2> group_by_root(const std::vector<NoduleSample>& samples) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> where;  // root -> (class, slot)
  std::array<std::vector<Group>, 2> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const NoduleSample& s = samples[i];
    if (s.label == Label::excluded) continue;
    const auto cls = static_cast<std::size_t>(s.label);
    const std::string& root = root_of(s);
    auto it = where.find(root);
    if (it == where.end()) {
      where.emplace(root, std::make_pair(cls, groups[cls].size()));
      groups[cls].push_back(Group{s.label, {i}});
    } else {
      if (it->second.first != cls) {
        throw DataError("lineage root '" + root + "' holds both benign and malignant samples");
      }
      groups[cls][it->second.second].members.push_back(i);
    }
  }
  return groups;
}

std::size_t part_size(double ratio, std::size_t groups) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(groups) + 1e-9));
}

void append(std::vector<std::size_t>& out, const Group& g) {
  out.insert(out.end(), g.members.begin(), g.members.end());
}

}  // namespace

SplitIndices split(const std::vector<NoduleSample>& samples, const SplitPlan& plan) {
  const double ratios[] = {plan.train, plan.val, plan.test};
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("split ratios must lie in [0, 1]");
  }
  if (std::abs(plan.train + plan.val + plan.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }

  auto groups = group_by_root(samples);
  SplitIndices out;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    auto& gs = groups[cls];
    if (gs.empty()) continue;
    Rng rng(mix_seed(plan.seed, cls));
    rng.shuffle(gs);
    const std::size_t n_train = part_size(plan.train, gs.size());
    const std::size_t n_val = std::min(part_size(plan.val, gs.size()), gs.size() - n_train);
    const std::size_t n_test = gs.size() - n_train - n_val;
    const std::size_t sizes[] = {n_train, n_val, n_test};
    const char* names[] = {"train", "validation", "test"};
    for (int p = 0; p < 3; ++p) {
      if (ratios[p] > 0.0 && sizes[p] == 0) {
        throw DataError("class " + to_string(static_cast<Label>(cls)) + " has " +
                        std::to_string(gs.size()) + " lineage roots, too few for a non-empty " +
                        names[p] + " part");
      }
    }
    for (std::size_t g = 0; g < gs.size(); ++g) {
      append(g < n_train ? out.train : g < n_train + n_val ? out.val : out.test, gs[g]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<std::vector<std::size_t>> kfold(const std::vector<NoduleSample>& samples, std::size_t k,
                                            std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2, got " + std::to_string(k));
  auto groups = group_by_root(samples);
  if (groups[0].size() + groups[1].size() < k) {
    throw DataError("k-fold with k = " + std::to_string(k) + " needs at least k lineage roots");
  }
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    Rng rng(mix_seed(seed, cls));
    rng.shuffle(groups[cls]);
    for (const Group& g : groups[cls]) {
      append(folds[next], g);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<NoduleSample> select(const std::vector<NoduleSample>& samples,
                                 const std::vector<std::size_t>& indices) {
  std::vector<NoduleSample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw InternalError("sample index out of range");
    out.push_back(samples[i]);
  }
  return out;
}

}  // namespace sisc
