#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace icldyn {

using ClassIndex = std::size_t;

/// One labeled example. Sentence tasks carry one input, pair tasks two.
struct Example {
  std::vector<std::string> inputs;
  ClassIndex label = 0;
};

/// Labeled examples plus the class vocabulary. Class frequencies are the
/// empirical label marginal over `examples`.
class TaskDataset {
 public:
  TaskDataset() = default;
  /// Validates and computes class frequencies from the examples.
  TaskDataset(std::string name, std::vector<std::string> class_names,
              std::vector<Example> examples);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& class_names() const noexcept {
    return class_names_;
  }
  const std::vector<Example>& examples() const noexcept { return examples_; }
  const std::vector<double>& class_frequencies() const noexcept {
    return frequencies_;
  }
  std::size_t num_classes() const noexcept { return class_names_.size(); }
  std::size_t size() const noexcept { return examples_.size(); }
  /// Number of text inputs per example (1 or 2).
  std::size_t arity() const noexcept { return arity_; }

  const Example& operator[](std::size_t i) const { return examples_.at(i); }

 private:
  std::string name_;
  std::vector<std::string> class_names_;
  std::vector<Example> examples_;
  std::vector<double> frequencies_;
  std::size_t arity_ = 1;
};

/// Reads the line-delimited JSON dataset format. The first record is a
/// header `{"class_names": [...], "name": ...}`; every further record has
/// `text` (or `text1`/`text2`) and `label` (class index or class name).
TaskDataset parse_dataset(std::istream& in, std::string fallback_name = "");
TaskDataset load_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const TaskDataset& dataset);

/// Options for a generated binary sentiment-style task whose latent class is
/// recoverable from lexicon words, as consumed by BayesianMappingLM.
struct SyntheticTaskOptions {
  std::size_t size = 200;
  std::vector<std::string> class_names{"negative", "positive"};
  std::vector<std::vector<std::string>> lexicon{{"bad", "awful", "dull"},
                                                {"good", "great", "fun"}};
  std::vector<std::string> filler{"the", "movie", "was", "plot", "really",
                                  "quite", "acting", "very"};
  std::size_t words_per_example = 5;
  std::uint64_t seed = 0;
};

/// Balanced synthetic task: each example has exactly one lexicon word of
/// its class among filler words.
TaskDataset synthetic_task(const SyntheticTaskOptions& options);

}  // namespace icldyn
