#include <sstream>

#include "doctest.h"
#include "ehrenfest/table_io.hpp"

using namespace ehrenfest;

TEST_CASE("kernel table round trip is exact") {
  std::vector<double> v(9);
  for (std::size_t k = 0; k < 9; ++k) v[k] = 0.1 + 1.0 / (3.0 + static_cast<double>(k));
  const auto k0 = RateKernel::table(3, v);
  std::stringstream ss;
  write_kernel_table(ss, k0);
  const auto k1 = read_kernel_table(ss);
  REQUIRE(k1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(k1(i, j) == k0(i, j));
}

TEST_CASE("closed-form kernels export as tables") {
  const auto k0 = RateKernel::polynomial(4, {{1.0, 0.0}, {0.0, 1.0}});
  std::stringstream ss;
  write_kernel_table(ss, k0);
  const auto k1 = read_kernel_table(ss);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(k1(i, j) == k0(i, j));
}

TEST_CASE("profile table round trip is exact") {
  const auto p0 = InitialProfile::sample(7, [](double x) { return 1.0 / 3.0 + x * x; });
  std::stringstream ss;
  write_profile_table(ss, p0);
  const auto p1 = read_profile_table(ss);
  REQUIRE(p1.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(p1[i] == p0[i]);
}

TEST_CASE("malformed tables are rejected") {
  std::stringstream missing("i j lambda\n1 1 1.0\n1 2 1.0\n2 1 1.0\n");
  CHECK_THROWS(read_kernel_table(missing));
  std::stringstream negative("i phi\n1 1.0\n2 -1.0\n");
  CHECK_THROWS(read_profile_table(negative));
  std::stringstream garbage("i phi\n1 abc\n");
  CHECK_THROWS(read_profile_table(garbage));
}

TEST_CASE("number formatting") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5}) {
    CHECK(std::stod(format_roundtrip(v)) == v);
  }
  CHECK(format_csv(1.0 / 3.0) == "0.333333333333333");
}
