#include "fedsim/eval.hpp"

#include <stdexcept>
#include <string>

namespace fedsim {

std::uint64_t ConfusionMatrix::row_sum(std::size_t true_k) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < num_classes; ++p) s += at(true_k, p);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (std::uint64_t c : counts) s += c;
  return s;
}

EvalResult evaluate(const MlpParams& params, const Dataset& test,
                    Execution exec) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  if (params.output_dim() != test.num_classes)
    throw std::invalid_argument("evaluate: model emits " +
                                std::to_string(params.output_dim()) +
                                " logits for " +
                                std::to_string(test.num_classes) + " classes");

  std::vector<std::int32_t> pred = predict_labels(params, test, exec);

  EvalResult out;
  out.confusion = ConfusionMatrix(test.num_classes);
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::size_t t = static_cast<std::size_t>(test.labels[i]);
    const std::size_t p = static_cast<std::size_t>(pred[i]);
    out.confusion.at(t, p)++;
    if (t == p) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return out;
}

GroupAccuracy group_accuracy(const ConfusionMatrix& confusion,
                             const std::vector<std::size_t>& train_counts,
                             const GroupThresholds& thresholds) {
  if (train_counts.size() != confusion.num_classes)
    throw std::invalid_argument("group_accuracy: " +
                                std::to_string(train_counts.size()) +
                                " train counts for " +
                                std::to_string(confusion.num_classes) +
                                " classes");
  if (thresholds.few_max > thresholds.many_min)
    throw std::invalid_argument("group_accuracy: few_max " +
                                std::to_string(thresholds.few_max) +
                                " exceeds many_min " +
                                std::to_string(thresholds.many_min));

  std::uint64_t correct[3] = {0, 0, 0};  // many, medium, few
  std::uint64_t seen[3] = {0, 0, 0};
  std::uint64_t correct_all = 0, seen_all = 0;

  for (std::size_t k = 0; k < confusion.num_classes; ++k) {
    int g;
    if (train_counts[k] > thresholds.many_min)
      g = 0;
    else if (train_counts[k] < thresholds.few_max)
      g = 2;
    else
      g = 1;
    const std::uint64_t row = confusion.row_sum(k);
    const std::uint64_t diag = confusion.at(k, k);
    correct[g] += diag;
    seen[g] += row;
    correct_all += diag;
    seen_all += row;
  }

  GroupAccuracy out;
  out.all = seen_all == 0
                ? 0.0
                : static_cast<double>(correct_all) / static_cast<double>(seen_all);
  auto ratio = [](std::uint64_t c, std::uint64_t n) -> std::optional<double> {
    if (n == 0) return std::nullopt;
    return static_cast<double>(c) / static_cast<double>(n);
  };
  out.many = ratio(correct[0], seen[0]);
  out.medium = ratio(correct[1], seen[1]);
  out.few = ratio(correct[2], seen[2]);
  return out;
}

NormalizedConfusion normalize_confusion(const ConfusionMatrix& confusion) {
  NormalizedConfusion out;
  out.num_classes = confusion.num_classes;
  out.rows.assign(confusion.counts.size(), 0.0);
  out.zero_row.assign(confusion.num_classes, 0);
  for (std::size_t k = 0; k < confusion.num_classes; ++k) {
    const std::uint64_t row = confusion.row_sum(k);
    if (row == 0) {
      out.zero_row[k] = 1;
      continue;
    }
    for (std::size_t p = 0; p < confusion.num_classes; ++p)
      out.rows[k * out.num_classes + p] =
          static_cast<double>(confusion.at(k, p)) / static_cast<double>(row);
  }
  return out;
}

}  // namespace fedsim
