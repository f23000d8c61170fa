#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <vector>

namespace mfdeg::degree {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline constexpr int kMaxM = 64;

int chi_from(int genus, int boundaries);

// d_rho for rho in (4pi(m-1), 4pi m), product form with l = floor((m-1)/2).
BigInt degree_nonresonant(int m, int chi);

// Same value through binom(l - chi, l), evaluated by Pascal recursion only
// (no division), so it can serve as an independent check of the product.
BigInt degree_binomial(int m, int chi);

// Generalised binomial coefficient for integer n (possibly negative), k >= 0.
BigInt binomial(int n, int k);

BigInt ph_degree(int p, int q, int chi);

// d^+_m - d^-_m across rho = 4pi m.
BigInt degree_jump(int m, int chi);

// sum over 2p+q = m of (-1)^p ph(p,q)/(p! q!); has to agree with degree_jump.
BigInt jump_from_ph(int m, int chi);

// Same combination with arbitrary per-(p,q) signed critical point counts
// sum (-1)^morse, as delivered by a Kirchhoff-Routh census.
Rational jump_from_census(int m, const std::vector<std::pair<std::pair<int, int>, long>>& census);

BigInt to_integer(const Rational& r);

struct PhEntry {
  int p = 0;
  int q = 0;
  BigInt count;
};

struct DegreeRow {
  int m = 0;
  double rho_lo = 0;
  double rho_hi = 0;
  BigInt d;
  BigInt jump;
  std::vector<PhEntry> ph;
  bool existence = false;  // d != 0
};

struct DegreeTable {
  int genus = 0;
  int boundaries = 1;
  int chi = 1;
  std::vector<DegreeRow> rows;
};

DegreeTable degree_table(int genus, int boundaries, int m_max);

// Throws std::logic_error if d(m) != 1 + sum_{i<m} jump(i) anywhere.
void check_telescoping(const DegreeTable& t);

std::string to_json(const DegreeTable& t);
std::string to_csv(const DegreeTable& t);

}  // namespace mfdeg::degree
