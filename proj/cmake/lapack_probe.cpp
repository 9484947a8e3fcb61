#include <cmath>
#include <vector>

#include <lapacke.h>

// Exit status 0 when dsyevd returns an accurate eigendecomposition.
int main() {
  const int n = 320;
  std::vector<double> a(n * n), z;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int m = i < j ? i * j : j * i;
      a[i + n * j] = std::cos(0.37 * (m % 97)) + (i == j ? 3.0 * i : 0.0);
    }
  }
  z = a;
  std::vector<double> w(n);
  if (LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, z.data(), n, w.data()) != 0) return 1;
  double worst = 0;
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      double r = -w[k] * z[i + n * k];
      for (int j = 0; j < n; ++j) r += a[i + n * j] * z[j + n * k];
      worst = std::fmax(worst, std::abs(r));
    }
  }
  return worst <= 1e-8 * n ? 0 : 1;
}
