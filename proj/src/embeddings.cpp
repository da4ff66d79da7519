#include "nextbasket/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "nextbasket/error.hpp"
#include "nextbasket/random.hpp"

namespace nextbasket {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Softmax over r of u_p.v_r, written into `probs`. Returns log sum_r exp(u_p.v_r).
double softmax_over_contexts(const TrainState& state, ItemId p, std::span<double> probs) {
  const auto up = state.u(p);
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::uint32_t r = 0; r < state.n; ++r) {
    probs[r] = dot(up, state.v(ItemId{r}));
    max_score = std::max(max_score, probs[r]);
  }
  double sum = 0.0;
  for (std::uint32_t r = 0; r < state.n; ++r) {
    probs[r] = std::exp(probs[r] - max_score);
    sum += probs[r];
  }
  for (std::uint32_t r = 0; r < state.n; ++r) probs[r] /= sum;
  return max_score + std::log(sum);
}

void check_item(const TrainState& state, ItemId id) {
  if (id.index >= state.n) throw UsageError("item id outside the trained assortment");
}

// Ordered (target, context) pairs of one basket, capped by seeded subsampling.
std::vector<std::pair<ItemId, ItemId>> basket_pairs(const Basket& basket, std::size_t cap, Rng& rng) {
  std::vector<std::pair<ItemId, ItemId>> pairs;
  const auto items = basket.items();
  pairs.reserve(items.size() * (items.size() > 0 ? items.size() - 1 : 0));
  for (ItemId p : items) {
    for (ItemId q : items) {
      if (p != q) pairs.emplace_back(p, q);
    }
  }
  if (pairs.size() > cap) {
    // Partial Fisher-Yates: the first `cap` slots become a uniform sample.
    for (std::size_t i = 0; i < cap; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, pairs.size() - i));
      std::swap(pairs[i], pairs[j]);
    }
    pairs.resize(cap);
    std::sort(pairs.begin(), pairs.end());
  }
  return pairs;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t n, std::size_t dim) : n_(n), dim_(dim), values_(n * dim, 0.0) {}

EmbeddingTable::EmbeddingTable(std::size_t n, std::size_t dim, std::vector<double> values)
    : n_(n), dim_(dim), values_(std::move(values)) {
  if (values_.size() != n * dim) throw UsageError("embedding values do not match n x dim");
}

std::span<const double> EmbeddingTable::row(ItemId id) const {
  if (id.index >= n_) throw UsageError("item id " + std::to_string(id.index) + " has no embedding row");
  return {values_.data() + id.index * dim_, dim_};
}

std::span<double> EmbeddingTable::row(ItemId id) {
  if (id.index >= n_) throw UsageError("item id " + std::to_string(id.index) + " has no embedding row");
  return {values_.data() + id.index * dim_, dim_};
}

bool EmbeddingTable::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

TrainState init_train_state(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw UsageError("embedding dimension must be >= 1");
  TrainState state{n, dim, std::vector<double>(n * dim), std::vector<double>(n * dim)};
  Rng rng(seed);
  const double half_width = 0.5 / static_cast<double>(dim);
  for (auto& x : state.target) x = uniform_real(rng, -half_width, half_width);
  for (auto& x : state.context) x = uniform_real(rng, -half_width, half_width);
  return state;
}

double log_prob(const TrainState& state, ItemId p, ItemId q) {
  check_item(state, p);
  check_item(state, q);
  std::vector<double> probs(state.n);
  const double log_norm = softmax_over_contexts(state, p, probs);
  return dot(state.u(p), state.v(q)) - log_norm;
}

PairGradient log_prob_gradient(const TrainState& state, ItemId p, ItemId q) {
  check_item(state, p);
  check_item(state, q);
  std::vector<double> probs(state.n);
  softmax_over_contexts(state, p, probs);

  PairGradient grad{std::vector<double>(state.dim, 0.0), std::vector<double>(state.n * state.dim, 0.0)};
  const auto up = state.u(p);
  const auto vq = state.v(q);
  for (std::size_t d = 0; d < state.dim; ++d) grad.target[d] = vq[d];
  for (std::uint32_t r = 0; r < state.n; ++r) {
    const auto vr = state.v(ItemId{r});
    const double weight = (r == q.index ? 1.0 : 0.0) - probs[r];
    for (std::size_t d = 0; d < state.dim; ++d) {
      grad.target[d] -= probs[r] * vr[d];
      grad.context[r * state.dim + d] = weight * up[d];
    }
  }
  return grad;
}

double corpus_log_likelihood(const TrainState& state, std::span<const Basket> corpus) {
  std::vector<double> probs(state.n);
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& basket : corpus) {
    for (ItemId p : basket) {
      check_item(state, p);
      if (basket.size() < 2) continue;
      const double log_norm = softmax_over_contexts(state, p, probs);
      for (ItemId q : basket) {
        if (q == p) continue;
        total += dot(state.u(p), state.v(q)) - log_norm;
        ++pairs;
      }
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

TrainState train_state(std::span<const Basket> corpus, std::size_t n_items, std::size_t dim,
                       const TrainOptions& options) {
  if (corpus.empty()) throw UsageError("cannot train embeddings on an empty corpus");
  if (dim == 0) throw UsageError("embedding dimension must be >= 1");
  if (options.epochs < 1 || !(options.learning_rate > 0.0) || options.max_pairs_per_basket == 0) {
    throw UsageError("invalid embedding training options");
  }
  for (const auto& basket : corpus) {
    for (ItemId id : basket) {
      if (id.index >= n_items) throw UsageError("corpus references an item outside the assortment");
    }
  }

  TrainState state = init_train_state(n_items, dim, options.seed);
  std::size_t pairs_per_epoch = 0;
  for (const auto& basket : corpus) {
    const std::size_t s = basket.size();
    pairs_per_epoch += std::min(s * (s > 0 ? s - 1 : 0), options.max_pairs_per_basket);
  }
  if (pairs_per_epoch == 0) return state;

  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> probs(n_items);
  std::vector<double> grad_u(dim);
  std::vector<double> old_u(dim);
  std::vector<std::uint32_t> context_count(n_items, 0);

  const double total_pairs = static_cast<double>(pairs_per_epoch) * options.epochs;
  double processed = 0.0;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t index : order) {
      const auto pairs = basket_pairs(corpus[index], options.max_pairs_per_basket, rng);
      // Pairs arrive sorted by target; every group shares one softmax.
      for (std::size_t begin = 0; begin < pairs.size();) {
        const ItemId p = pairs[begin].first;
        std::size_t end = begin;
        while (end < pairs.size() && pairs[end].first == p) ++end;
        const double group = static_cast<double>(end - begin);

        const double lr = std::max(options.min_learning_rate,
                                   options.learning_rate * (1.0 - processed / total_pairs));
        const double log_norm = softmax_over_contexts(state, p, probs);
        if (!std::isfinite(log_norm)) throw InvariantError("embedding training diverged (non-finite softmax)");

        auto up = state.u(p);
        std::copy(up.begin(), up.end(), old_u.begin());
        std::fill(grad_u.begin(), grad_u.end(), 0.0);
        for (std::size_t i = begin; i < end; ++i) {
          const ItemId q = pairs[i].second;
          ++context_count[q.index];
          const auto vq = state.v(q);
          for (std::size_t d = 0; d < dim; ++d) grad_u[d] += vq[d];
        }
        for (std::uint32_t r = 0; r < n_items; ++r) {
          auto vr = state.v(ItemId{r});
          const double weight = static_cast<double>(context_count[r]) - group * probs[r];
          for (std::size_t d = 0; d < dim; ++d) {
            grad_u[d] -= group * probs[r] * vr[d];
            vr[d] += lr * weight * old_u[d];
          }
        }
        for (std::size_t d = 0; d < dim; ++d) up[d] += lr * grad_u[d];
        for (std::size_t i = begin; i < end; ++i) context_count[pairs[i].second.index] = 0;

        processed += group;
        begin = end;
      }
    }
    const bool finite = std::all_of(state.target.begin(), state.target.end(), [](double x) { return std::isfinite(x); }) &&
                        std::all_of(state.context.begin(), state.context.end(), [](double x) { return std::isfinite(x); });
    if (!finite) throw InvariantError("embedding training diverged (non-finite parameters)");
  }
  return state;
}

EmbeddingTable average_rows(const TrainState& state) {
  std::vector<double> values(state.n * state.dim);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.5 * (state.target[i] + state.context[i]);
  return EmbeddingTable(state.n, state.dim, std::move(values));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

std::filesystem::path vocabulary_sidecar(const std::filesystem::path& embeddings_path) {
  auto sidecar = embeddings_path;
  sidecar += ".vocab";
  return sidecar;
}

void save_embeddings(const EmbeddingTable& table, const Vocabulary& vocab, const std::filesystem::path& path) {
  if (!table.all_finite()) throw UsageError("refusing to save non-finite embeddings");
  if (vocab.size() != table.size()) throw UsageError("vocabulary size does not match embedding rows");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << table.size() << ' ' << table.dim() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::uint32_t i = 0; i < table.size(); ++i) {
    out << vocab.codes()[i];
    for (double x : table.row(ItemId{i})) out << ' ' << x;
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
  save_vocabulary(vocab, vocabulary_sidecar(path));
}

LoadedEmbeddings load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file " + path.string());
  auto fail = [&](std::size_t line_no, const std::string& what) {
    return DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };

  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing '<n> <dim>' header");
  std::istringstream header(line);
  long long n = -1;
  long long dim = -1;
  std::string extra;
  if (!(header >> n >> dim) || (header >> extra) || n < 0 || dim < 1) {
    throw fail(1, "malformed header, expected '<n> <dim>'");
  }

  LoadedEmbeddings loaded;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n * dim));
  for (long long row = 0; row < n; ++row) {
    const std::size_t line_no = static_cast<std::size_t>(row) + 2;
    if (!std::getline(in, line)) {
      throw fail(line_no, "missing row " + std::to_string(row + 1) + " of " + std::to_string(n));
    }
    std::istringstream fields(line);
    std::string code;
    if (!(fields >> code)) throw fail(line_no, "empty row");
    loaded.codes.push_back(code);
    std::string token;
    long long count = 0;
    while (fields >> token) {
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), x);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw fail(line_no, "non-numeric token '" + token + "'");
      }
      values.push_back(x);
      ++count;
    }
    if (count != dim) {
      throw fail(line_no, "expected " + std::to_string(dim) + " values, found " + std::to_string(count));
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw fail(static_cast<std::size_t>(n) + 2, "more rows than the header declares");
  }
  loaded.table = EmbeddingTable(static_cast<std::size_t>(n), static_cast<std::size_t>(dim), std::move(values));
  return loaded;
}

EmbeddingTable align_embeddings(const LoadedEmbeddings& loaded, const Vocabulary& vocab) {
  std::unordered_map<std::string, std::uint32_t> row_of;
  for (std::uint32_t i = 0; i < loaded.codes.size(); ++i) row_of.emplace(loaded.codes[i], i);
  const std::size_t dim = loaded.table.dim();
  std::vector<double> values(vocab.size() * dim);
  for (std::uint32_t i = 0; i < vocab.size(); ++i) {
    const auto it = row_of.find(vocab.codes()[i]);
    if (it == row_of.end()) throw DataError("no embedding for item '" + vocab.codes()[i] + "'");
    const auto src = loaded.table.row(ItemId{it->second});
    std::copy(src.begin(), src.end(), values.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return EmbeddingTable(vocab.size(), dim, std::move(values));
}

}  // namespace nextbasket
