#include "rbsd/regression.hpp"

#include "rbsd/errors.hpp"

namespace rbsd {

int basis_size(int q, int degree) {
  if (q < 0 || degree < 0) throw ValidationError("basis_size needs q, degree >= 0");
  // C(q + p, p) without overflow for the small sizes used here.
  long long c = 1;
  for (int i = 1; i <= degree; ++i) c = c * (q + i) / i;
  return static_cast<int>(c);
}

namespace {

void extend(int q, int remaining, int var, std::vector<int>& cur,
            std::vector<std::vector<int>>& out) {
  if (var == q) {
    if (remaining == 0) out.push_back(cur);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    cur[var] = e;
    extend(q, remaining - e, var + 1, cur, out);
  }
  cur[var] = 0;
}

}  // namespace

std::vector<std::vector<int>> monomial_exponents(int q, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(q, 0);
  for (int d = 0; d <= degree; ++d) {
    if (q == 0) {
      if (d == 0) out.push_back(cur);
      continue;
    }
    extend(q, d, 0, cur, out);
  }
  return out;
}

}  // namespace rbsd
