// Payoff structures, the prosocial payoff transformation, closed-form
// threshold analysis and pure-equilibrium enumeration for two-player
// strategic-form games.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prosocial {

// Strategy indices of the 2x2 Stag Hunt.
inline constexpr std::size_t kHunt = 0;
inline constexpr std::size_t kForage = 1;

/// Payoffs of a generalized Stag Hunt: h > c >= m > g.
class StagHuntPayoffs {
 public:
  StagHuntPayoffs(double h, double c, double m, double g)
      : h_(h), c_(c), m_(m), g_(g) {
    if (!(std::isfinite(h) && std::isfinite(c) && std::isfinite(m) &&
          std::isfinite(g))) {
      throw std::invalid_argument("StagHuntPayoffs: non-finite payoff");
    }
    if (!(h > c && c >= m && m > g)) {
      std::ostringstream os;
      os << "StagHuntPayoffs: require h > c >= m > g, got h=" << h
         << " c=" << c << " m=" << m << " g=" << g;
      throw std::invalid_argument(os.str());
    }
  }

  double h() const { return h_; }  // joint hunt
  double c() const { return c_; }  // forage against a hunter
  double m() const { return m_; }  // joint forage
  double g() const { return g_; }  // hunt alone

  friend bool operator==(const StagHuntPayoffs&,
                         const StagHuntPayoffs&) = default;

 private:
  double h_, c_, m_, g_;
};

/// Level of prosociality, 0 (selfish) ... 0.5 (fully prosocial) ... 1
/// (selfless).
class ProsocialWeight {
 public:
  constexpr ProsocialWeight() = default;
  explicit ProsocialWeight(double alpha) : alpha_(alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw std::invalid_argument("ProsocialWeight: alpha must lie in [0,1], got " +
                                  std::to_string(alpha));
    }
  }
  constexpr double value() const { return alpha_; }

  friend auto operator<=>(const ProsocialWeight&,
                          const ProsocialWeight&) = default;

 private:
  double alpha_ = 0.0;
};

/// Dense row-major real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) {
        throw std::invalid_argument("Matrix: ragged initializer");
      }
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    }
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Two-player game in strategic form. r1(i, j) is the row player's reward and
/// r2(i, j) the column player's when the row player picks i and the column
/// player picks j.
class BimatrixGame {
 public:
  BimatrixGame(Matrix r1, Matrix r2, bool symmetric = false)
      : r1_(std::move(r1)), r2_(std::move(r2)), symmetric_(symmetric) {
    if (r1_.rows() == 0 || r1_.cols() == 0) {
      throw std::invalid_argument("BimatrixGame: empty payoff table");
    }
    if (r1_.rows() != r2_.rows() || r1_.cols() != r2_.cols()) {
      throw std::invalid_argument("BimatrixGame: tables differ in shape");
    }
    if (symmetric_ && !(r1_.rows() == r1_.cols() && r2_ == r1_.transpose())) {
      throw std::invalid_argument(
          "BimatrixGame: flagged symmetric but R2 != transpose(R1)");
    }
  }

  /// Symmetric game whose row-player table is `u`.
  static BimatrixGame symmetric_from(const Matrix& u) {
    return BimatrixGame(u, u.transpose(), true);
  }

  std::size_t n1() const { return r1_.rows(); }
  std::size_t n2() const { return r1_.cols(); }
  const Matrix& r1() const { return r1_; }
  const Matrix& r2() const { return r2_; }
  bool symmetric() const { return symmetric_; }

  friend bool operator==(const BimatrixGame&, const BimatrixGame&) = default;

 private:
  Matrix r1_;
  Matrix r2_;
  bool symmetric_;
};

struct StrategyProfile {
  std::size_t a1 = 0;
  std::size_t a2 = 0;
  friend auto operator<=>(const StrategyProfile&,
                          const StrategyProfile&) = default;
};

/// 2x2 table with Hunt = 0 and Forage = 1.
inline BimatrixGame to_bimatrix(const StagHuntPayoffs& p) {
  return BimatrixGame::symmetric_from(
      Matrix{{p.h(), p.g()}, {p.c(), p.m()}});
}

/// Utilities of two prosocial players: U1 = (1-a1) R1 + a1 R2 and
/// U2 = (1-a2) R2 + a2 R1. The result is flagged symmetric only when the
/// input is symmetric and both weights agree.
inline BimatrixGame prosocial_transform(const BimatrixGame& game,
                                        ProsocialWeight alpha1,
                                        ProsocialWeight alpha2) {
  const double a1 = alpha1.value();
  const double a2 = alpha2.value();
  Matrix u1(game.n1(), game.n2());
  Matrix u2(game.n1(), game.n2());
  for (std::size_t i = 0; i < game.n1(); ++i) {
    for (std::size_t j = 0; j < game.n2(); ++j) {
      const double r1 = game.r1()(i, j);
      const double r2 = game.r2()(i, j);
      // Weight zero must reproduce the input bit for bit.
      u1(i, j) = a1 == 0.0 ? r1 : (1.0 - a1) * r1 + a1 * r2;
      u2(i, j) = a2 == 0.0 ? r2 : (1.0 - a2) * r2 + a2 * r1;
    }
  }
  const bool symmetric = game.symmetric() && a1 == a2;
  return BimatrixGame(std::move(u1), std::move(u2), symmetric);
}

/// Minimum belief that the partner hunts above which an alpha-prosocial
/// agent weakly prefers Hunt, clamped to [0, 1].
inline double pstar(const StagHuntPayoffs& p, ProsocialWeight alpha) {
  const double denom = p.h() + p.m() - p.g() - p.c();
  if (!(denom > 0.0)) {
    throw std::logic_error("pstar: non-positive denominator");
  }
  const double numer = (p.m() - p.g()) - alpha.value() * (p.c() - p.g());
  return std::clamp(numer / denom, 0.0, 1.0);
}

/// Prosociality at which Hunt becomes weakly dominant.
inline ProsocialWeight alpha_star(const StagHuntPayoffs& p) {
  const double a = (p.m() - p.g()) / (p.c() - p.g());
  if (!(a > 0.0 && a <= 1.0)) {
    throw std::logic_error("alpha_star: outside (0,1]");
  }
  return ProsocialWeight(a);
}

struct RiskDominance {
  bool hunt_risk_dominant = false;
  // pstar is exactly 1/2; reported as not risk dominant.
  bool tie = false;
  double selfish_pstar = 0.0;
};

inline RiskDominance risk_dominance(const StagHuntPayoffs& p) {
  RiskDominance out;
  out.selfish_pstar = pstar(p, ProsocialWeight(0.0));
  out.tie = out.selfish_pstar == 0.5;
  out.hunt_risk_dominant = out.selfish_pstar < 0.5;
  return out;
}

inline bool is_risk_dominant_hunt(const StagHuntPayoffs& p) {
  return risk_dominance(p).hunt_risk_dominant;
}

/// All pure profiles from which neither player gains by a unilateral
/// deviation (weak inequalities, exact comparisons).
inline std::vector<StrategyProfile> enumerate_pure_nash(
    const BimatrixGame& game) {
  const std::size_t n1 = game.n1();
  const std::size_t n2 = game.n2();
  std::vector<double> best_row(n2, -INFINITY);
  std::vector<double> best_col(n1, -INFINITY);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      best_row[j] = std::max(best_row[j], game.r1()(i, j));
      best_col[i] = std::max(best_col[i], game.r2()(i, j));
    }
  }
  std::vector<StrategyProfile> out;
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      if (game.r1()(i, j) >= best_row[j] && game.r2()(i, j) >= best_col[i]) {
        out.push_back({i, j});
      }
    }
  }
  return out;
}

/// A symmetric game with its strategies reordered by descending diagonal
/// payoff (ties keep the original order). `order[k]` is the original index of
/// the strategy now at position k.
struct CanonicalGame {
  BimatrixGame game;
  std::vector<std::size_t> order;
};

inline CanonicalGame canonicalize_by_diagonal(const BimatrixGame& game) {
  if (!game.symmetric()) {
    throw std::invalid_argument("canonicalize_by_diagonal: game not symmetric");
  }
  const Matrix& u = game.r1();
  std::vector<std::size_t> order(u.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&u](std::size_t a, std::size_t b) { return u(a, a) > u(b, b); });
  Matrix sorted(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < u.cols(); ++j) sorted(i, j) = u(order[i], order[j]);
  }
  return {BimatrixGame::symmetric_from(sorted), std::move(order)};
}

inline bool diagonal_sorted(const Matrix& u) {
  for (std::size_t i = 1; i < u.rows(); ++i) {
    if (u(i, i) > u(i - 1, i - 1)) return false;
  }
  return true;
}

/// True iff every 2x2 restriction {i, j}, i < j, is a generalized Stag Hunt:
/// U_ii > U_ji >= U_jj > U_ij. Requires a symmetric game whose diagonal is
/// non-increasing (see canonicalize_by_diagonal).
inline bool is_all_subgames_staghunt(const BimatrixGame& game) {
  if (!game.symmetric()) {
    throw std::invalid_argument("is_all_subgames_staghunt: game not symmetric");
  }
  const Matrix& u = game.r1();
  if (!diagonal_sorted(u)) {
    throw std::invalid_argument(
        "is_all_subgames_staghunt: diagonal not sorted; canonicalize first");
  }
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = i + 1; j < u.rows(); ++j) {
      if (!(u(i, i) > u(j, i) && u(j, i) >= u(j, j) && u(j, j) > u(i, j))) {
        return false;
      }
    }
  }
  return true;
}

/// Row-player table of an alpha-prosocial agent in a symmetric game:
/// (1-alpha) U + alpha U^T.
inline Matrix prosocial_row_table(const Matrix& u, double alpha) {
  Matrix out(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
      out(i, j) = alpha == 0.0 ? u(i, j) : (1.0 - alpha) * u(i, j) + alpha * u(j, i);
    }
  }
  return out;
}

/// Does row i weakly dominate row j against every column of the full table?
inline bool weakly_dominates(const Matrix& u, std::size_t i, std::size_t j) {
  for (std::size_t k = 0; k < u.cols(); ++k) {
    if (u(i, k) < u(j, k)) return false;
  }
  return true;
}

/// Does strategy 0 weakly dominate every other row of `u`?
inline bool first_strategy_dominant(const Matrix& u) {
  for (std::size_t j = 1; j < u.rows(); ++j) {
    if (!weakly_dominates(u, 0, j)) return false;
  }
  return true;
}

/// Smallest alpha on the grid {0, step, 2 step, ..., 1} at which strategy 0
/// weakly dominates every other strategy in the alpha-agent's table
/// U^alpha = (1 - alpha) U + alpha U^T. Every grid point is checked, since the
/// feasible set need not reach alpha = 1.
///
/// Throws std::invalid_argument if the game fails is_all_subgames_staghunt
/// and std::logic_error if no grid point works.
inline ProsocialWeight dominance_alpha(const BimatrixGame& game,
                                       double step = 1e-4) {
  if (!(step > 0.0 && step <= 1.0)) {
    throw std::invalid_argument("dominance_alpha: step must lie in (0,1]");
  }
  if (!is_all_subgames_staghunt(game)) {
    throw std::invalid_argument(
        "dominance_alpha: not every 2x2 subgame is a generalized Stag Hunt");
  }
  const Matrix& u = game.r1();
  const auto n_steps = static_cast<long long>(std::ceil(1.0 / step - 1e-9));
  for (long long k = 0; k <= n_steps; ++k) {
    const double a = k >= n_steps ? 1.0 : static_cast<double>(k) * step;
    if (first_strategy_dominant(prosocial_row_table(u, a))) return ProsocialWeight(a);
  }
  throw std::logic_error("dominance_alpha: strategy 0 is not weakly dominant for any alpha <= 1");
}

// Plain-text table format. One line per row strategy, entries separated by
// whitespace. An entry "a,b" gives the row and column players' rewards; a
// bare number "a" gives the row reward only, in which case every entry must
// be bare and the game is symmetric with R2 = transpose(R1). '#' starts a
// comment.
inline BimatrixGame parse_bimatrix(std::istream& in) {
  std::vector<std::vector<std::pair<double, double>>> rows;
  bool any_pair = false;
  bool any_bare = false;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::pair<double, double>> row;
    while (ls >> tok) {
      const auto comma = tok.find(',');
      try {
        std::size_t used = 0;
        if (comma == std::string::npos) {
          row.emplace_back(std::stod(tok, &used), 0.0);
          if (used != tok.size()) throw std::invalid_argument(tok);
          any_bare = true;
        } else {
          const std::string a = tok.substr(0, comma);
          const std::string b = tok.substr(comma + 1);
          std::size_t used_b = 0;
          const double va = std::stod(a, &used);
          const double vb = std::stod(b, &used_b);
          if (used != a.size() || used_b != b.size()) throw std::invalid_argument(tok);
          row.emplace_back(va, vb);
          any_pair = true;
        }
      } catch (const std::exception&) {
        throw std::invalid_argument("parse_bimatrix: bad entry '" + tok + "'");
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("parse_bimatrix: empty table");
  if (any_pair && any_bare) {
    throw std::invalid_argument("parse_bimatrix: mixed bare and paired entries");
  }
  const std::size_t n2 = rows.front().size();
  Matrix r1(rows.size(), n2);
  Matrix r2(rows.size(), n2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != n2) {
      throw std::invalid_argument("parse_bimatrix: ragged rows");
    }
    for (std::size_t j = 0; j < n2; ++j) {
      r1(i, j) = rows[i][j].first;
      r2(i, j) = rows[i][j].second;
    }
  }
  if (any_bare) {
    if (r1.rows() != r1.cols()) {
      throw std::invalid_argument("parse_bimatrix: bare entries need a square table");
    }
    return BimatrixGame::symmetric_from(r1);
  }
  const bool sym = r1.rows() == r1.cols() && r2 == r1.transpose();
  return BimatrixGame(std::move(r1), std::move(r2), sym);
}

inline void write_bimatrix(std::ostream& os, const BimatrixGame& game) {
  for (std::size_t i = 0; i < game.n1(); ++i) {
    for (std::size_t j = 0; j < game.n2(); ++j) {
      if (j) os << ' ';
      os << game.r1()(i, j) << ',' << game.r2()(i, j);
    }
    os << '\n';
  }
}

}  // namespace prosocial
