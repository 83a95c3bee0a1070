#include "icldyn/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "icldyn/errors.hpp"

namespace icldyn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t rotate_class(std::size_t y, int direction, std::size_t num_classes) {
  const auto c = static_cast<long long>(num_classes);
  long long v = (static_cast<long long>(y) + direction) % c;
  if (v < 0) v += c;
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> replacement_assignment(const ReplaceLabels& r,
                                                std::size_t num_classes) {
  if (r.assignment.empty()) {
    std::vector<std::size_t> identity(num_classes);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    return identity;
  }
  return r.assignment;
}

}  // namespace

std::vector<std::string> arbitrary_label_names(std::size_t num_classes) {
  if (num_classes > 26) {
    throw TransformError("arbitrary labels support at most 26 classes");
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) {
    names.emplace_back(1, static_cast<char>('A' + c));
  }
  return names;
}

void TransformSpec::validate(std::size_t num_classes) const {
  std::visit(
      overloaded{
          [](const DefaultLabels&) {},
          [](const RandomizeLabels& r) {
            if (!(r.proportion >= 0.0 && r.proportion <= 1.0)) {
              throw TransformError("randomization proportion must be in [0, 1]");
            }
          },
          [](const RotateLabels& r) {
            if (r.direction != 1 && r.direction != -1) {
              throw TransformError("rotation direction must be +1 or -1");
            }
          },
          [num_classes](const ReplaceLabels& r) {
            if (r.names.size() != num_classes) {
              throw TransformError("replacement needs one name per class");
            }
            if (std::set<std::string>(r.names.begin(), r.names.end()).size() !=
                r.names.size()) {
              throw TransformError("replacement names must be distinct");
            }
            const auto a = replacement_assignment(r, num_classes);
            std::vector<bool> hit(num_classes, false);
            if (a.size() != num_classes) {
              throw TransformError("replacement mapping must be a bijection");
            }
            for (auto v : a) {
              if (v >= num_classes || hit[v]) {
                throw TransformError("replacement mapping must be a bijection");
              }
              hit[v] = true;
            }
          },
          [](const ChangepointLabels& c) {
            if (c.changepoint < 1) {
              throw TransformError("changepoint must be at least 1");
            }
          },
      },
      labeling);
}

Relation relation_at(const ChangepointLabels& schedule, std::size_t i) {
  switch (schedule.mode) {
    case ChangepointMode::default_to_flipped:
      return i <= schedule.changepoint ? Relation::default_relation
                                       : Relation::flipped;
    case ChangepointMode::flipped_to_default:
      return i <= schedule.changepoint ? Relation::flipped
                                       : Relation::default_relation;
    case ChangepointMode::alternating: {
      const bool odd = (i % 2) == 1;
      return odd == schedule.alternating_starts_flipped
                 ? Relation::flipped
                 : Relation::default_relation;
    }
  }
  return Relation::default_relation;
}

std::pair<std::size_t, std::size_t> schedule_counts(
    const ChangepointLabels& schedule, std::size_t total) {
  std::size_t def = 0;
  std::size_t flip = 0;
  for (std::size_t i = 1; i <= total; ++i) {
    (relation_at(schedule, i) == Relation::default_relation ? def : flip) += 1;
  }
  return {def, flip};
}

LabelAssignment apply(const TransformSpec& spec, const TaskDataset& dataset,
                      std::span<const std::size_t> order, Rng& rng) {
  const std::size_t num_classes = dataset.num_classes();
  spec.validate(num_classes);
  const std::size_t n = order.size();

  LabelAssignment out;
  out.class_names = dataset.class_names();
  out.displayed.reserve(n);
  for (auto idx : order) {
    if (idx >= dataset.size()) throw TransformError("order index out of range");
    out.displayed.push_back(dataset[idx].label);
  }
  out.relations.assign(n, Relation::default_relation);

  std::visit(
      overloaded{
          [](const DefaultLabels&) {},
          [&](const RandomizeLabels& r) {
            const double target = std::round(r.proportion * static_cast<double>(n));
            if (target > static_cast<double>(n)) {
              throw TransformError("randomized count exceeds context size");
            }
            const auto k = static_cast<std::size_t>(target);
            std::vector<std::size_t> positions(n);
            std::iota(positions.begin(), positions.end(), std::size_t{0});
            // Partial Fisher-Yates: the first k entries are a uniform subset.
            for (std::size_t i = 0; i < k; ++i) {
              std::swap(positions[i], positions[i + rng.uniform_index(n - i)]);
            }
            positions.resize(k);
            std::sort(positions.begin(), positions.end());
            const auto& freq = dataset.class_frequencies();
            for (auto p : positions) out.displayed[p] = rng.categorical(freq);
            out.randomized_positions = std::move(positions);
          },
          [&](const RotateLabels& r) {
            for (auto& y : out.displayed) y = rotate_class(y, r.direction, num_classes);
            out.relations.assign(n, Relation::flipped);
          },
          [&](const ReplaceLabels& r) {
            const auto a = replacement_assignment(r, num_classes);
            for (auto& y : out.displayed) y = a[y];
            out.class_names = r.names;
          },
          [&](const ChangepointLabels& c) {
            for (std::size_t i = 0; i < n; ++i) {
              out.relations[i] = relation_at(c, i + 1);
              if (out.relations[i] == Relation::flipped) {
                out.displayed[i] = rotate_class(out.displayed[i], 1, num_classes);
              }
            }
          },
      },
      spec.labeling);

  out.label_strings.reserve(n);
  for (auto y : out.displayed) out.label_strings.push_back(out.class_names[y]);
  return out;
}

RepetitionPlan inject_repetitions(std::span<const std::size_t> order,
                                  std::size_t query, std::size_t k, Rng& rng) {
  RepetitionPlan plan;
  plan.order.assign(order.begin(), order.end());
  std::vector<char> is_copy(plan.order.size(), 0);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t at = rng.uniform_index(plan.order.size() + 1);
    plan.order.insert(plan.order.begin() + static_cast<std::ptrdiff_t>(at), query);
    is_copy.insert(is_copy.begin() + static_cast<std::ptrdiff_t>(at), 1);
  }
  for (std::size_t i = 0; i < plan.order.size(); ++i) {
    if (is_copy[i]) plan.copy_positions.push_back(i);
  }
  return plan;
}

std::string_view changepoint_mode_name(ChangepointMode mode) {
  switch (mode) {
    case ChangepointMode::default_to_flipped:
      return "default_to_flipped";
    case ChangepointMode::flipped_to_default:
      return "flipped_to_default";
    case ChangepointMode::alternating:
      return "alternating";
  }
  return "";
}

ChangepointMode changepoint_mode_from_name(std::string_view name) {
  if (name == "default_to_flipped" || name == "D->F") {
    return ChangepointMode::default_to_flipped;
  }
  if (name == "flipped_to_default" || name == "F->D") {
    return ChangepointMode::flipped_to_default;
  }
  if (name == "alternating") return ChangepointMode::alternating;
  throw TransformError("unknown changepoint mode '" + std::string(name) + "'");
}

}  // namespace icldyn
