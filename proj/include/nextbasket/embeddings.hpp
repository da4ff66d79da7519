#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nextbasket/core.hpp"

namespace nextbasket {

/// Row-major n x dim matrix holding one embedding vector per item.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t n, std::size_t dim);
  EmbeddingTable(std::size_t n, std::size_t dim, std::vector<double> values);

  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::span<const double> row(ItemId id) const;
  [[nodiscard]] std::span<double> row(ItemId id);
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

struct TrainOptions {
  double learning_rate = 0.025;
  double min_learning_rate = 1e-4;
  int epochs = 5;
  std::uint64_t seed = 1;
  std::size_t max_pairs_per_basket = 10000;
};

/// Target vectors u and context vectors v of the in-basket skip-gram model.
struct TrainState {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> target;   // u, n x dim
  std::vector<double> context;  // v, n x dim

  [[nodiscard]] std::span<const double> u(ItemId id) const { return {target.data() + id.index * dim, dim}; }
  [[nodiscard]] std::span<const double> v(ItemId id) const { return {context.data() + id.index * dim, dim}; }
  [[nodiscard]] std::span<double> u(ItemId id) { return {target.data() + id.index * dim, dim}; }
  [[nodiscard]] std::span<double> v(ItemId id) { return {context.data() + id.index * dim, dim}; }
};

/// Both matrices uniform in [-0.5/dim, 0.5/dim], drawn from `seed`.
TrainState init_train_state(std::size_t n, std::size_t dim, std::uint64_t seed);

/// log Pr(p | q) = u_p.v_q - log sum_r exp(u_p.v_r), normalised over the whole assortment.
double log_prob(const TrainState& state, ItemId p, ItemId q);

/// Gradient of log Pr(p | q). Only u_p receives a target gradient; every v_r
/// receives (delta_rq - softmax_r) * u_p.
struct PairGradient {
  std::vector<double> target;   // d/du_p, length dim
  std::vector<double> context;  // d/dv, n x dim
};
PairGradient log_prob_gradient(const TrainState& state, ItemId p, ItemId q);

/// Mean of log Pr(p | q) over every ordered pair (p, q), p != q, of every basket.
/// Returns 0 when the corpus holds no pairs.
double corpus_log_likelihood(const TrainState& state, std::span<const Basket> corpus);

/// Stochastic gradient ascent on the in-basket log likelihood. Deterministic for
/// a given seed. Throws UsageError on an empty corpus or dim == 0 and
/// InvariantError if the parameters overflow.
TrainState train_state(std::span<const Basket> corpus, std::size_t n_items, std::size_t dim,
                       const TrainOptions& options = {});

/// Row-wise (u_p + v_p) / 2.
EmbeddingTable average_rows(const TrainState& state);

inline EmbeddingTable train_embeddings(std::span<const Basket> corpus, std::size_t n_items, std::size_t dim,
                                       const TrainOptions& options = {}) {
  return average_rows(train_state(corpus, n_items, dim, options));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Writes `<n> <dim>` followed by `<code> <f_1> ... <f_dim>` rows at full
/// precision, plus the vocabulary sidecar at `vocabulary_sidecar(path)`.
void save_embeddings(const EmbeddingTable& table, const Vocabulary& vocab, const std::filesystem::path& path);

struct LoadedEmbeddings {
  EmbeddingTable table;
  std::vector<std::string> codes;  // raw code of each row
};
LoadedEmbeddings load_embeddings(const std::filesystem::path& path);

std::filesystem::path vocabulary_sidecar(const std::filesystem::path& embeddings_path);

/// Reorders loaded rows to match `vocab`. Throws DataError when an item of the
/// vocabulary has no row.
EmbeddingTable align_embeddings(const LoadedEmbeddings& loaded, const Vocabulary& vocab);

}  // namespace nextbasket
