#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "icldyn/dataset.hpp"
#include "icldyn/random.hpp"
#include "icldyn/verbalize.hpp"

namespace icldyn {

struct DefaultLabels {
  bool operator==(const DefaultLabels&) const = default;
};

/// Replaces round(proportion * N) uniformly chosen labels with draws from
/// the empirical class marginal. proportion 1 is full randomization.
struct RandomizeLabels {
  double proportion = 1.0;
  bool operator==(const RandomizeLabels&) const = default;
};

/// y <- (y + direction) mod C. For binary tasks this is the label flip.
struct RotateLabels {
  int direction = 1;
  bool operator==(const RotateLabels&) const = default;
};

/// Swaps class names for replacement names. Class c is displayed as
/// names[assignment[c]]; assignment must be a permutation. Displayed class
/// indices refer to `names`.
struct ReplaceLabels {
  std::vector<std::string> names;
  std::vector<std::size_t> assignment;
  bool operator==(const ReplaceLabels&) const = default;
};

enum class ChangepointMode { default_to_flipped, flipped_to_default, alternating };

/// Label relation switches between default and rotated by +1.
struct ChangepointLabels {
  ChangepointMode mode = ChangepointMode::default_to_flipped;
  std::size_t changepoint = 1;
  bool alternating_starts_flipped = true;
  bool operator==(const ChangepointLabels&) const = default;
};

using Labeling = std::variant<DefaultLabels, RandomizeLabels, RotateLabels,
                              ReplaceLabels, ChangepointLabels>;

/// A label manipulation protocol. Prompt attachment and answer-in-context
/// repetition wrap the inner labeling.
struct TransformSpec {
  std::string name = "default";
  Labeling labeling = DefaultLabels{};
  std::optional<PromptKind> prompt;
  /// Copies of the test query inserted into the context (classic mode).
  std::optional<std::size_t> answer_repetitions;
  std::uint64_t seed = 0;

  /// Throws TransformError when parameters are out of range.
  void validate(std::size_t num_classes) const;
};

/// Default ("A", "B", ...) replacement names for C classes.
std::vector<std::string> arbitrary_label_names(std::size_t num_classes);

enum class Relation { default_relation, flipped };

struct LabelAssignment {
  std::vector<std::string> label_strings;
  std::vector<std::size_t> displayed;
  std::vector<std::string> class_names;
  /// Relation in effect at each position (changepoint bookkeeping).
  std::vector<Relation> relations;
  /// Positions whose label was resampled by randomization.
  std::vector<std::size_t> randomized_positions;
};

/// Displayed labels for `order` under `spec`. Deterministic given `rng`.
LabelAssignment apply(const TransformSpec& spec, const TaskDataset& dataset,
                      std::span<const std::size_t> order, Rng& rng);

/// Relation at 1-indexed position `i` of a changepoint schedule.
Relation relation_at(const ChangepointLabels& schedule, std::size_t i);

/// (default count, flipped count) over positions 1..total.
std::pair<std::size_t, std::size_t> schedule_counts(
    const ChangepointLabels& schedule, std::size_t total);

struct RepetitionPlan {
  std::vector<std::size_t> order;
  /// Positions in `order` holding a copy of the query, ascending.
  std::vector<std::size_t> copy_positions;
};

/// Inserts `k` copies of `query` at uniformly random context positions.
RepetitionPlan inject_repetitions(std::span<const std::size_t> order,
                                  std::size_t query, std::size_t k, Rng& rng);

std::string_view changepoint_mode_name(ChangepointMode mode);
ChangepointMode changepoint_mode_from_name(std::string_view name);

}  // namespace icldyn
