#include "nextbasket/evaluation.hpp"

#include <omp.h>

#include <algorithm>
#include <exception>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "nextbasket/error.hpp"
#include "nextbasket/wasserstein.hpp"

#include <spdlog/spdlog.h>

namespace nextbasket {

double f1_score(const Basket& predicted, const Basket& truth) {
  if (truth.empty()) throw UsageError("F1 score against an empty truth basket");
  if (predicted.empty()) return 0.0;
  const auto hits = static_cast<double>(intersection_size(predicted, truth));
  const double precision = hits / static_cast<double>(predicted.size());
  const double recall = hits / static_cast<double>(truth.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double jaccard(const Basket& predicted, const Basket& truth) {
  const std::size_t both = intersection_size(predicted, truth);
  const std::size_t only_pred = predicted.size() - both;
  const std::size_t only_truth = truth.size() - both;
  const std::size_t total = both + only_pred + only_truth;
  if (total == 0) throw UsageError("Jaccard coefficient of two empty baskets");
  return static_cast<double>(both) / static_cast<double>(total);
}

double wasserstein_metric(const Basket& predicted, const Basket& truth, const EmbeddingTable& table, double p) {
  if (predicted.empty() || truth.empty()) throw UsageError("Wasserstein metric needs two non-empty baskets");
  return exact_wasserstein(PointCloud::from_basket(predicted, table), PointCloud::from_basket(truth, table), p);
}

void finalize_means(EvalReport& report) {
  double w = 0.0;
  double f = 0.0;
  double j = 0.0;
  for (const auto& row : report.rows) {
    w += row.wasserstein;
    f += row.f1;
    j += row.jaccard;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(report.rows.size(), 1));
  report.mean_wasserstein = w / n;
  report.mean_f1 = f / n;
  report.mean_jaccard = j / n;
}

EvalReport evaluate_model(const std::string& model_name, const BasketModel& model,
                          std::span<const PurchaseHistory> test, const EmbeddingTable& table, double p,
                          int threads) {
  if (test.empty()) throw UsageError("cannot evaluate on an empty test set");

  std::vector<const PurchaseHistory*> usable;
  EvalReport report;
  report.model = model_name;
  for (const auto& h : test) {
    if (h.length() < 2) {
      ++report.skipped;
      spdlog::warn("skipping test customer '{}' with fewer than two baskets", h.customer);
      continue;
    }
    usable.push_back(&h);
  }
  if (usable.empty()) throw UsageError("no test history has two or more baskets");

  report.rows.resize(usable.size());
  std::exception_ptr failure;
  const int team = threads > 0 ? threads : omp_get_max_threads();
  const auto count = static_cast<std::ptrdiff_t>(usable.size());
#pragma omp parallel for num_threads(team) schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const PurchaseHistory& h = *usable[static_cast<std::size_t>(i)];
      EvalRow row;
      row.customer = h.customer;
      row.truth = h.baskets.back();
      row.predicted = model(without_last(h));
      row.f1 = f1_score(row.predicted, row.truth);
      row.jaccard = jaccard(row.predicted, row.truth);
      row.wasserstein = row.predicted.empty() ? std::numeric_limits<double>::infinity()
                                              : wasserstein_metric(row.predicted, row.truth, table, p);
      report.rows[static_cast<std::size_t>(i)] = std::move(row);
    } catch (...) {
#pragma omp critical(nextbasket_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const EvalRow& a, const EvalRow& b) { return a.customer < b.customer; });
  finalize_means(report);
  return report;
}

namespace {

void write_number(std::ostream& out, double value) {
  out << std::fixed << std::setprecision(10) << value;
}

}  // namespace

void write_report_csv(const EvalReport& report, std::ostream& out) {
  out << "customer,wasserstein,f1,jaccard\n";
  for (const auto& row : report.rows) {
    out << row.customer << ',';
    write_number(out, row.wasserstein);
    out << ',';
    write_number(out, row.f1);
    out << ',';
    write_number(out, row.jaccard);
    out << '\n';
  }
  out << "MEAN,";
  write_number(out, report.mean_wasserstein);
  out << ',';
  write_number(out, report.mean_f1);
  out << ',';
  write_number(out, report.mean_jaccard);
  out << '\n';
}

ReportMeans read_report_means(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("MEAN,", 0) != 0) continue;
    std::istringstream fields(line.substr(5));
    ReportMeans means;
    char c1 = 0;
    char c2 = 0;
    if (fields >> means.wasserstein >> c1 >> means.f1 >> c2 >> means.jaccard && c1 == ',' && c2 == ',') {
      return means;
    }
    throw DataError("malformed MEAN row in report");
  }
  throw DataError("report has no MEAN row");
}

std::vector<CategoryRow> category_breakdown(const EvalReport& report, std::span<const std::string> category_of,
                                            const EmbeddingTable& table, double p) {
  auto restrict_to = [&](const Basket& basket, const std::string& category) {
    std::vector<ItemId> kept;
    for (ItemId id : basket) {
      if (id.index < category_of.size() && category_of[id.index] == category) kept.push_back(id);
    }
    return Basket(std::move(kept));
  };

  std::map<std::string, CategoryRow> by_category;
  for (const auto& row : report.rows) {
    std::vector<std::string> seen;
    for (ItemId id : row.truth) {
      if (id.index >= category_of.size() || category_of[id.index].empty()) continue;
      if (std::find(seen.begin(), seen.end(), category_of[id.index]) == seen.end()) seen.push_back(category_of[id.index]);
    }
    for (const auto& category : seen) {
      const Basket truth = restrict_to(row.truth, category);
      const Basket predicted = restrict_to(row.predicted, category);
      auto& agg = by_category[category];
      agg.category = category;
      ++agg.rows;
      agg.f1 += f1_score(predicted, truth);
      agg.jaccard += jaccard(predicted, truth);
      if (!predicted.empty()) {
        ++agg.wasserstein_rows;
        agg.wasserstein += wasserstein_metric(predicted, truth, table, p);
      }
    }
  }

  std::vector<CategoryRow> rows;
  for (auto& [name, agg] : by_category) {
    agg.f1 /= static_cast<double>(agg.rows);
    agg.jaccard /= static_cast<double>(agg.rows);
    if (agg.wasserstein_rows > 0) agg.wasserstein /= static_cast<double>(agg.wasserstein_rows);
    rows.push_back(agg);
  }
  return rows;
}

void write_category_csv(std::span<const CategoryRow> rows, std::ostream& out) {
  out << "category,rows,wasserstein,f1,jaccard\n";
  for (const auto& row : rows) {
    out << row.category << ',' << row.rows << ',';
    if (row.wasserstein_rows > 0) {
      write_number(out, row.wasserstein);
    } else {
      out << "NA";
    }
    out << ',';
    write_number(out, row.f1);
    out << ',';
    write_number(out, row.jaccard);
    out << '\n';
  }
}

}  // namespace nextbasket
