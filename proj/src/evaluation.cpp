#include "scp/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "scp/rng.hpp"

namespace scp {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc: scores and labels length mismatch");
  }
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0/1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc: needs both classes");
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Sum of positive-sample ranks, tied runs sharing the average rank.  Kept
  // as an exact half-integer: rank_sum accumulates in units of 1/2.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    // Ranks i+1 .. j (1-based); average = (i + 1 + j) / 2.
    const double avg_rank = (static_cast<double>(i) + 1.0 + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum += avg_rank;
    }
    i = j;
  }

  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport metrics_at_threshold(const std::vector<double>& scores,
                                   const std::vector<int>& labels,
                                   double p_thres) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("metrics_at_threshold: scores and labels length mismatch");
  }
  MetricsReport r;
  r.threshold = p_thres;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool called = scores[i] > p_thres;
    if (labels[i] == 1) {
      called ? ++r.tp : ++r.fn;
    } else if (labels[i] == 0) {
      called ? ++r.fp : ++r.tn;
    } else {
      throw std::invalid_argument("metrics_at_threshold: labels must be 0/1");
    }
  }
  const long long total = r.tp + r.fp + r.tn + r.fn;
  r.accuracy = total > 0 ? static_cast<double>(r.tp + r.tn) / static_cast<double>(total) : 0.0;
  r.sensitivity = (r.tp + r.fn) > 0
                      ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn)
                      : 0.0;
  r.far = (r.fp + r.tn) > 0 ? static_cast<double>(r.fp) / static_cast<double>(r.fp + r.tn)
                            : 0.0;
  const bool both = (r.tp + r.fn) > 0 && (r.fp + r.tn) > 0;
  r.auc = both ? auc(scores, labels) : 0.5;
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  return nlohmann::json{
      {"accuracy", accuracy}, {"sensitivity", sensitivity}, {"far", far},
      {"auc", auc},           {"tp", tp},                   {"fp", fp},
      {"tn", tn},             {"fn", fn},                   {"threshold", threshold}};
}

std::vector<ImportanceEntry> permutation_importance(
    const std::function<double(const std::vector<double>&)>& scorer,
    const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& rows,
    const std::vector<int>& labels, int repeats, std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("permutation_importance: no rows");
  if (repeats < 1) throw std::invalid_argument("permutation_importance: repeats must be >= 1");
  const std::size_t d = names.size();
  for (const auto& row : rows) {
    if (row.size() != d) {
      throw std::invalid_argument("permutation_importance: row width mismatch");
    }
  }

  const std::size_t n = rows.size();
  std::vector<double> base_scores(n);
  for (std::size_t i = 0; i < n; ++i) base_scores[i] = scorer(rows[i]);
  const double base_auc = auc(base_scores, labels);

  std::vector<ImportanceEntry> out(d);
  std::vector<std::vector<double>> work = rows;
  std::vector<double> column(n), perm_scores(n);
  for (std::size_t f = 0; f < d; ++f) {
    out[f].feature = names[f];
    double drop_sum = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
      for (std::size_t i = 0; i < n; ++i) column[i] = rows[i][f];
      seeded_shuffle(column, sub_seed(seed, 'P', f, static_cast<std::uint64_t>(rep)));
      for (std::size_t i = 0; i < n; ++i) work[i][f] = column[i];
      for (std::size_t i = 0; i < n; ++i) perm_scores[i] = scorer(work[i]);
      drop_sum += base_auc - auc(perm_scores, labels);
    }
    out[f].mean_auc_drop = drop_sum / static_cast<double>(repeats);
    for (std::size_t i = 0; i < n; ++i) work[i][f] = rows[i][f];
  }

  std::stable_sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
    return a.mean_auc_drop > b.mean_auc_drop;
  });
  return out;
}

}  // namespace scp
