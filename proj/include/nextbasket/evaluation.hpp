#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nextbasket/core.hpp"
#include "nextbasket/embeddings.hpp"

namespace nextbasket {

/// Harmonic mean of precision and recall; 0 when they are both 0 or the
/// prediction is empty. Throws UsageError for an empty truth.
double f1_score(const Basket& predicted, const Basket& truth);

/// |pred ∩ truth| / |pred ∪ truth|. Throws UsageError when both are empty.
double jaccard(const Basket& predicted, const Basket& truth);

/// Exact p-Wasserstein distance between the embedded baskets.
double wasserstein_metric(const Basket& predicted, const Basket& truth, const EmbeddingTable& table, double p);

struct EvalRow {
  std::string customer;
  double wasserstein = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
  Basket predicted;
  Basket truth;
};

struct EvalReport {
  std::string model;
  std::string config;             // free-form snapshot of the settings used
  std::vector<EvalRow> rows;      // sorted by customer key
  double mean_wasserstein = 0.0;
  double mean_f1 = 0.0;
  double mean_jaccard = 0.0;
  std::size_t skipped = 0;        // test histories shorter than two baskets
};

/// Maps the history without its last basket to a predicted basket. Must be
/// safe to call concurrently.
using BasketModel = std::function<Basket(const PurchaseHistory& prefix)>;

/// Leave-last-out evaluation: predicts each test customer's final basket from
/// the rest of the history. Customers are scored in parallel; the report is
/// ordered by customer key. Throws UsageError when no test history is usable.
EvalReport evaluate_model(const std::string& model_name, const BasketModel& model,
                          std::span<const PurchaseHistory> test, const EmbeddingTable& table, double p,
                          int threads = 0);

/// Recomputes the three means from the rows.
void finalize_means(EvalReport& report);

/// `customer,wasserstein,f1,jaccard` header, one row per prediction, then a MEAN row.
void write_report_csv(const EvalReport& report, std::ostream& out);

struct ReportMeans {
  double wasserstein = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
};
/// Reads the MEAN row back from a report written by write_report_csv.
ReportMeans read_report_means(std::istream& in);

/// Metrics restricted to the items of one category. A row counts towards a
/// category when the truth holds at least one of its items; the Wasserstein
/// column averages only rows where the prediction also holds one.
struct CategoryRow {
  std::string category;
  std::size_t rows = 0;
  std::size_t wasserstein_rows = 0;
  double wasserstein = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
};

/// `category_of[item]` names each item's category; items with an empty name
/// are ignored. Rows come out sorted by category name.
std::vector<CategoryRow> category_breakdown(const EvalReport& report, std::span<const std::string> category_of,
                                            const EmbeddingTable& table, double p);

void write_category_csv(std::span<const CategoryRow> rows, std::ostream& out);

}  // namespace nextbasket
