#include "mfdeg/degree.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mfdeg::degree {

namespace {

void check_m(int m) {
  if (m < 1 || m > kMaxM)
    throw std::invalid_argument("m must lie in [1, " + std::to_string(kMaxM) + "], got " + std::to_string(m));
}

BigInt factorial(int n) {
  BigInt f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

nlohmann::json big_to_json(const BigInt& v) {
  if (v >= std::numeric_limits<long long>::min() && v <= std::numeric_limits<long long>::max())
    return static_cast<long long>(v);
  return v.str();
}

}  // namespace

int chi_from(int genus, int boundaries) {
  if (genus < 0) throw std::invalid_argument("genus must be >= 0");
  if (boundaries < 1) throw std::invalid_argument("boundaries must be >= 1");
  return 2 - 2 * genus - boundaries;
}

BigInt to_integer(const Rational& r) {
  if (boost::multiprecision::denominator(r) != 1)
    throw std::logic_error("non-integer degree value " + r.str());
  return boost::multiprecision::numerator(r);
}

BigInt degree_nonresonant(int m, int chi) {
  check_m(m);
  if (m <= 2) return 1;
  const int l = (m - 1) / 2;
  Rational prod = 1;
  for (int i = 1; i <= l; ++i) prod *= BigInt(i - chi);
  prod /= Rational(factorial(l));
  return to_integer(prod);
}

BigInt binomial(int n, int k) {
  if (k < 0) return 0;
  if (n < 0) {
    // C(n,k) = (-1)^k C(k-n-1, k)
    BigInt c = binomial(k - n - 1, k);
    return (k % 2) ? BigInt(-c) : c;
  }
  if (k > n) return 0;
  // Pascal row by row; only additions.
  std::vector<BigInt> row(k + 1, 0);
  row[0] = 1;
  for (int i = 1; i <= n; ++i)
    for (int j = std::min(i, k); j >= 1; --j) row[j] += row[j - 1];
  return row[k];
}

BigInt degree_binomial(int m, int chi) {
  check_m(m);
  if (m <= 2) return 1;
  const int l = (m - 1) / 2;
  return binomial(l - chi, l);
}

BigInt ph_degree(int p, int q, int chi) {
  if (p < 0 || q < 0 || 2 * p + q < 1) throw std::invalid_argument("need p,q >= 0 and 2p+q >= 1");
  if (q != 0) return 0;
  BigInt prod = 1;
  for (int i = 0; i < p; ++i) prod *= (chi - i);
  return prod;
}

BigInt degree_jump(int m, int chi) {
  check_m(m);
  if (m % 2) return 0;
  const int p = m / 2;
  Rational prod = 1;
  for (int i = 0; i < p; ++i) prod *= BigInt(-chi + i);
  prod /= Rational(factorial(p));
  return to_integer(prod);
}

BigInt jump_from_ph(int m, int chi) {
  check_m(m);
  Rational s = 0;
  for (int p = 0; 2 * p <= m; ++p) {
    const int q = m - 2 * p;
    Rational term(ph_degree(p, q, chi));
    term /= Rational(factorial(p) * factorial(q));
    s += (p % 2) ? Rational(-term) : term;
  }
  return to_integer(s);
}

Rational jump_from_census(int m, const std::vector<std::pair<std::pair<int, int>, long>>& census) {
  check_m(m);
  Rational s = 0;
  for (const auto& [pq, signed_count] : census) {
    const auto [p, q] = pq;
    if (2 * p + q != m) throw std::invalid_argument("census entry does not match m");
    Rational term{BigInt(signed_count)};
    term /= Rational(factorial(p) * factorial(q));
    s += (p % 2) ? Rational(-term) : term;
  }
  return s;
}

DegreeTable degree_table(int genus, int boundaries, int m_max) {
  check_m(m_max);
  DegreeTable t;
  t.genus = genus;
  t.boundaries = boundaries;
  t.chi = chi_from(genus, boundaries);
  for (int m = 1; m <= m_max; ++m) {
    DegreeRow r;
    r.m = m;
    r.rho_lo = 4 * std::numbers::pi * (m - 1);
    r.rho_hi = 4 * std::numbers::pi * m;
    r.d = degree_nonresonant(m, t.chi);
    r.jump = degree_jump(m, t.chi);
    for (int p = m / 2; p >= 0; --p) r.ph.push_back({p, m - 2 * p, ph_degree(p, m - 2 * p, t.chi)});
    r.existence = r.d != 0;
    t.rows.push_back(std::move(r));
  }
  check_telescoping(t);
  return t;
}

void check_telescoping(const DegreeTable& t) {
  BigInt acc = 1;
  for (const auto& r : t.rows) {
    if (r.d != acc)
      throw std::logic_error("telescoping fails at m=" + std::to_string(r.m) + ": d=" + r.d.str() + " vs " + acc.str());
    if (r.jump != jump_from_ph(r.m, t.chi))
      throw std::logic_error("jump disagrees with Poincare-Hopf sum at m=" + std::to_string(r.m));
    acc += r.jump;
  }
}

std::string to_json(const DegreeTable& t) {
  nlohmann::json j;
  j["genus"] = t.genus;
  j["boundaries"] = t.boundaries;
  j["chi"] = t.chi;
  nlohmann::json d = nlohmann::json::array(), jumps = nlohmann::json::array(), rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    d.push_back(big_to_json(r.d));
    jumps.push_back(big_to_json(r.jump));
    nlohmann::json row;
    row["m"] = r.m;
    row["rho_interval"] = {r.rho_lo, r.rho_hi};
    row["d"] = big_to_json(r.d);
    row["jump"] = big_to_json(r.jump);
    row["existence"] = r.existence;
    nlohmann::json ph = nlohmann::json::array();
    for (const auto& e : r.ph) ph.push_back({{"p", e.p}, {"q", e.q}, {"count", big_to_json(e.count)}});
    row["ph"] = ph;
    rows.push_back(row);
  }
  j["d"] = d;
  j["jump"] = jumps;
  j["rows"] = rows;
  return j.dump(2);
}

std::string to_csv(const DegreeTable& t) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  const int m_max = t.rows.empty() ? 0 : t.rows.back().m;
  os << "m,rho_interval,d,jump";
  for (int m = 1; m <= m_max; ++m)
    for (int p = m / 2; p >= 0; --p) os << ",ph_" << p << "_" << (m - 2 * p);
  os << '\n';
  os.precision(9);
  for (const auto& r : t.rows) {
    os << r.m << ",(" << r.rho_lo << ";" << r.rho_hi << ")," << r.d << "," << r.jump;
    for (int m = 1; m <= m_max; ++m)
      for (int p = m / 2; p >= 0; --p) {
        os << ",";
        if (m == r.m) os << ph_degree(p, m - 2 * p, t.chi);
      }
    os << '\n';
  }
  return os.str();
}

}  // namespace mfdeg::degree
