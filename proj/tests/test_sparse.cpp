#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>
#include <sstream>

#include "patchtrack/sparse.hpp"

using namespace patchtrack;

namespace {

TransitionMatrix from_dense(const Eigen::MatrixXd& d, const std::vector<int>& row_bins,
                            const std::vector<int>& col_bins) {
    TransitionMatrix m;
    m.row_bins = row_bins;
    m.col_bins = col_bins;
    m.row_ptr.assign(static_cast<std::size_t>(d.rows()) + 1, 0);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.cols(); ++c) {
            if (d(r, c) != 0.0) {
                m.col_idx.push_back(static_cast<int>(c));
                m.values.push_back(d(r, c));
            }
        }
        m.row_ptr[static_cast<std::size_t>(r) + 1] = m.values.size();
    }
    return m;
}

Eigen::MatrixXd to_dense(const TransitionMatrix& m) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.rows()),
                                              static_cast<Eigen::Index>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
            d(static_cast<Eigen::Index>(r), m.col_idx[k]) = m.values[k];
    return d;
}

std::vector<int> iota_bins(int n, int start = 0) {
    std::vector<int> b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = start + i;
    return b;
}

Eigen::MatrixXd random_sparse_dense(int rows, int cols, double density, std::mt19937& rng) {
    std::uniform_real_distribution<double> val(-1.0, 1.0), coin(0.0, 1.0);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (coin(rng) < density) d(r, c) = val(rng);
    return d;
}

}  // namespace

TEST_CASE("matvec and transpose_matvec agree with dense products") {
    std::mt19937 rng(19);
    for (int trial = 0; trial < 5; ++trial) {
        const int rows = 3 + trial * 7;
        const int cols = 5 + trial * 3;
        const Eigen::MatrixXd d = random_sparse_dense(rows, cols, 0.3, rng);
        const TransitionMatrix m = from_dense(d, iota_bins(rows), iota_bins(cols, 100));

        Eigen::VectorXd x = Eigen::VectorXd::Random(cols);
        const std::vector<double> xv(x.data(), x.data() + cols);
        const auto y = m.matvec(xv);
        const Eigen::VectorXd y_ref = d * x;
        for (int r = 0; r < rows; ++r)
            REQUIRE(y[static_cast<std::size_t>(r)] == Catch::Approx(y_ref(r)).margin(1e-12));

        Eigen::VectorXd u = Eigen::VectorXd::Random(rows);
        const std::vector<double> uv(u.data(), u.data() + rows);
        const auto z = m.transpose_matvec(uv);
        const Eigen::VectorXd z_ref = d.transpose() * u;
        for (int c = 0; c < cols; ++c)
            REQUIRE(z[static_cast<std::size_t>(c)] == Catch::Approx(z_ref(c)).margin(1e-12));
    }
}

TEST_CASE("row sums match the dense matrix") {
    std::mt19937 rng(23);
    const Eigen::MatrixXd d = random_sparse_dense(12, 9, 0.4, rng);
    const TransitionMatrix m = from_dense(d, iota_bins(12), iota_bins(9));
    for (int r = 0; r < 12; ++r)
        REQUIRE(m.row_sum(static_cast<std::size_t>(r)) ==
                Catch::Approx(d.row(r).sum()).margin(1e-12));
}

TEST_CASE("multiply matches the dense product and chains bin labels") {
    std::mt19937 rng(29);
    const auto mid = iota_bins(14, 50);
    const Eigen::MatrixXd da = random_sparse_dense(10, 14, 0.35, rng);
    const Eigen::MatrixXd db = random_sparse_dense(14, 8, 0.35, rng);
    const TransitionMatrix a = from_dense(da, iota_bins(10), mid);
    const TransitionMatrix b = from_dense(db, mid, iota_bins(8, 200));

    const TransitionMatrix c = multiply(a, b);
    REQUIRE(c.row_bins == a.row_bins);
    REQUIRE(c.col_bins == b.col_bins);
    const Eigen::MatrixXd dc = to_dense(c);
    const Eigen::MatrixXd ref = da * db;
    REQUIRE((dc - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("multiply rejects mismatched bin labels") {
    const Eigen::MatrixXd da = Eigen::MatrixXd::Identity(3, 3);
    const TransitionMatrix a = from_dense(da, iota_bins(3), iota_bins(3, 10));
    const TransitionMatrix b = from_dense(da, iota_bins(3, 11), iota_bins(3, 20));
    REQUIRE_THROWS_AS(multiply(a, b), ConfigError);
}

TEST_CASE("compose multiplies a chain left to right") {
    std::mt19937 rng(31);
    std::vector<TransitionMatrix> chain;
    std::vector<Eigen::MatrixXd> dense;
    const int dims[6] = {9, 12, 7, 11, 8, 10};
    for (int k = 0; k < 5; ++k) {
        const Eigen::MatrixXd d = random_sparse_dense(dims[k], dims[k + 1], 0.4, rng);
        chain.push_back(from_dense(d, iota_bins(dims[k], 10 * k), iota_bins(dims[k + 1], 10 * (k + 1))));
        dense.push_back(d);
    }
    const TransitionMatrix c = compose(chain);
    Eigen::MatrixXd ref = dense[0];
    for (int k = 1; k < 5; ++k) ref = ref * dense[static_cast<std::size_t>(k)];
    REQUIRE((to_dense(c) - ref).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE_THROWS_AS(compose(std::span<const TransitionMatrix>{}), ConfigError);
}

TEST_CASE("text dump round-trips exactly") {
    std::mt19937 rng(37);
    const Eigen::MatrixXd d = random_sparse_dense(6, 9, 0.3, rng);
    const TransitionMatrix m = from_dense(d, iota_bins(6, 3), iota_bins(9, 40));

    std::stringstream ss;
    dump_matrix(ss, m);
    const TransitionMatrix back = parse_matrix_dump(ss);
    REQUIRE(back.row_bins == m.row_bins);
    REQUIRE(back.col_bins == m.col_bins);
    REQUIRE(back.row_ptr == m.row_ptr);
    REQUIRE(back.col_idx == m.col_idx);
    REQUIRE(back.values == m.values);
}

TEST_CASE("parse rejects malformed dumps") {
    std::stringstream ss("rows 2 cols nonsense");
    REQUIRE_THROWS_AS(parse_matrix_dump(ss), DataError);
    std::stringstream oob("rows 1 cols 1 nnz 1\nrow_bins 0\ncol_bins 0\n0 5 1.0\n");
    REQUIRE_THROWS_AS(parse_matrix_dump(oob), DataError);
}
