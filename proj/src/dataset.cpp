#include "icldyn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "icldyn/errors.hpp"
#include "icldyn/random.hpp"

namespace icldyn {

using json = nlohmann::json;

TaskDataset::TaskDataset(std::string name,
                         std::vector<std::string> class_names,
                         std::vector<Example> examples)
    : name_(std::move(name)),
      class_names_(std::move(class_names)),
      examples_(std::move(examples)) {
  if (class_names_.size() < 2) {
    throw DatasetError("a task needs at least two classes");
  }
  std::set<std::string> distinct(class_names_.begin(), class_names_.end());
  if (distinct.size() != class_names_.size()) {
    throw DatasetError("class names must be pairwise distinct");
  }
  if (examples_.empty()) throw DatasetError("dataset has no examples");

  arity_ = examples_.front().inputs.size();
  if (arity_ < 1 || arity_ > 2) {
    throw DatasetError("examples must carry one or two inputs");
  }
  std::vector<std::size_t> counts(class_names_.size(), 0);
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    if (ex.inputs.size() != arity_) {
      throw DatasetError("example " + std::to_string(i) +
                         " has a different number of inputs");
    }
    if (ex.label >= class_names_.size()) {
      throw DatasetError("example " + std::to_string(i) +
                         " has label index out of range");
    }
    ++counts[ex.label];
  }
  frequencies_.resize(counts.size());
  const double n = static_cast<double>(examples_.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    frequencies_[c] = static_cast<double>(counts[c]) / n;
  }
}

namespace {

ClassIndex parse_label(const json& value,
                       const std::vector<std::string>& class_names,
                       std::size_t line) {
  if (value.is_number_integer()) {
    const auto idx = value.get<long long>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= class_names.size()) {
      throw DatasetError("line " + std::to_string(line) +
                         ": label index out of range");
    }
    return static_cast<ClassIndex>(idx);
  }
  if (value.is_string()) {
    const auto name = value.get<std::string>();
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) {
      throw DatasetError("line " + std::to_string(line) + ": unknown label '" +
                         name + "'");
    }
    return static_cast<ClassIndex>(it - class_names.begin());
  }
  throw DatasetError("line " + std::to_string(line) +
                     ": label must be an index or a class name");
}

}  // namespace

TaskDataset parse_dataset(std::istream& in, std::string fallback_name) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> class_names;
  std::string name = std::move(fallback_name);
  bool have_header = false;
  std::vector<Example> examples;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      if (!record.contains("class_names")) {
        throw DatasetError("first record must list class_names");
      }
      class_names = record.at("class_names").get<std::vector<std::string>>();
      if (record.contains("name")) name = record.at("name").get<std::string>();
      have_header = true;
      continue;
    }
    Example ex;
    if (record.contains("text")) {
      ex.inputs.push_back(record.at("text").get<std::string>());
    } else if (record.contains("text1") && record.contains("text2")) {
      ex.inputs.push_back(record.at("text1").get<std::string>());
      ex.inputs.push_back(record.at("text2").get<std::string>());
    } else {
      throw DatasetError("line " + std::to_string(lineno) +
                         ": record needs text or text1/text2");
    }
    if (!record.contains("label")) {
      throw DatasetError("line " + std::to_string(lineno) + ": missing label");
    }
    ex.label = parse_label(record.at("label"), class_names, lineno);
    examples.push_back(std::move(ex));
  }
  if (!have_header) throw DatasetError("empty dataset file");
  return TaskDataset(std::move(name), std::move(class_names),
                     std::move(examples));
}

TaskDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  return parse_dataset(in, path.stem().string());
}

void write_dataset(std::ostream& out, const TaskDataset& dataset) {
  json header{{"name", dataset.name()},
              {"class_names", dataset.class_names()}};
  out << header.dump() << '\n';
  for (const auto& ex : dataset.examples()) {
    json record;
    if (ex.inputs.size() == 1) {
      record["text"] = ex.inputs[0];
    } else {
      record["text1"] = ex.inputs[0];
      record["text2"] = ex.inputs[1];
    }
    record["label"] = ex.label;
    out << record.dump() << '\n';
  }
}

TaskDataset synthetic_task(const SyntheticTaskOptions& options) {
  const std::size_t num_classes = options.class_names.size();
  if (options.lexicon.size() != num_classes) {
    throw DatasetError("synthetic task needs one lexicon per class");
  }
  if (options.words_per_example < 1 || options.filler.empty()) {
    throw DatasetError("synthetic task needs filler words");
  }
  Rng rng(options.seed);
  std::vector<Example> examples;
  examples.reserve(options.size);
  for (std::size_t i = 0; i < options.size; ++i) {
    const ClassIndex label = i % num_classes;
    const auto& words = options.lexicon[label];
    std::vector<std::string> tokens;
    for (std::size_t w = 0; w + 1 < options.words_per_example; ++w) {
      tokens.push_back(options.filler[rng.uniform_index(options.filler.size())]);
    }
    const std::size_t at = rng.uniform_index(tokens.size() + 1);
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at),
                  words[rng.uniform_index(words.size())]);
    std::string text;
    for (std::size_t w = 0; w < tokens.size(); ++w) {
      if (w) text += ' ';
      text += tokens[w];
    }
    examples.push_back(Example{{std::move(text)}, label});
  }
  rng.shuffle(std::span<Example>(examples));
  return TaskDataset("synthetic", options.class_names, std::move(examples));
}

}  // namespace icldyn
