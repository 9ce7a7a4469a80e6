#pragma once

#include <cstddef>
#include <iostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "patchtrack/core.hpp"

namespace patchtrack {

/// Sparse row-substochastic transition matrix between two indexed bin
/// subsets. Row and column spaces are identified by ascending global bin ids;
/// entries are stored CSR with ascending local column index per row.
struct TransitionMatrix {
    std::vector<int> row_bins;
    std::vector<int> col_bins;
    std::vector<std::size_t> row_ptr;  // size rows()+1
    std::vector<int> col_idx;          // local column indices
    std::vector<double> values;

    std::size_t rows() const { return row_bins.size(); }
    std::size_t cols() const { return col_bins.size(); }
    std::size_t nnz() const { return values.size(); }

    double row_sum(std::size_t r) const {
        double s = 0.0;
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += values[k];
        return s;
    }

    /// w = P v with v over col_bins, w over row_bins.
    std::vector<double> matvec(std::span<const double> v) const {
        if (v.size() != cols()) throw ConfigError("matvec: vector length does not match cols");
        std::vector<double> w(rows(), 0.0);
        for (std::size_t r = 0; r < rows(); ++r) {
            double s = 0.0;
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                s += values[k] * v[static_cast<std::size_t>(col_idx[k])];
            w[r] = s;
        }
        return w;
    }

    /// w = P^T u with u over row_bins, w over col_bins.
    std::vector<double> transpose_matvec(std::span<const double> u) const {
        if (u.size() != rows()) throw ConfigError("matvec: vector length does not match rows");
        std::vector<double> w(cols(), 0.0);
        for (std::size_t r = 0; r < rows(); ++r) {
            const double ur = u[r];
            if (ur == 0.0) continue;
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                w[static_cast<std::size_t>(col_idx[k])] += values[k] * ur;
        }
        return w;
    }
};

/// C = A B. Requires A.col_bins == B.row_bins (index-set chaining).
inline TransitionMatrix multiply(const TransitionMatrix& a, const TransitionMatrix& b) {
    if (a.col_bins != b.row_bins)
        throw ConfigError("compose: column bins of left factor do not match row bins of right");
    TransitionMatrix c;
    c.row_bins = a.row_bins;
    c.col_bins = b.col_bins;
    c.row_ptr.assign(a.rows() + 1, 0);

    std::vector<double> acc(b.cols(), 0.0);
    std::vector<int> touched;
    touched.reserve(b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        touched.clear();
        for (std::size_t ka = a.row_ptr[r]; ka < a.row_ptr[r + 1]; ++ka) {
            const auto mid = static_cast<std::size_t>(a.col_idx[ka]);
            const double av = a.values[ka];
            for (std::size_t kb = b.row_ptr[mid]; kb < b.row_ptr[mid + 1]; ++kb) {
                const int j = b.col_idx[kb];
                if (acc[static_cast<std::size_t>(j)] == 0.0) touched.push_back(j);
                acc[static_cast<std::size_t>(j)] += av * b.values[kb];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (int j : touched) {
            const double x = acc[static_cast<std::size_t>(j)];
            if (x != 0.0) {
                c.col_idx.push_back(j);
                c.values.push_back(x);
            }
            acc[static_cast<std::size_t>(j)] = 0.0;
        }
        c.row_ptr[r + 1] = c.values.size();
    }
    return c;
}

/// Left-to-right product of a chain of step matrices.
inline TransitionMatrix compose(std::span<const TransitionMatrix> chain) {
    if (chain.empty()) throw ConfigError("compose: empty chain");
    TransitionMatrix c = chain[0];
    for (std::size_t i = 1; i < chain.size(); ++i) c = multiply(c, chain[i]);
    return c;
}

/// Text dump: header with shapes and bin-id lists, then one
/// `row col value` triplet per line (0-based local indices).
inline void dump_matrix(std::ostream& os, const TransitionMatrix& m) {
    os << "rows " << m.rows() << " cols " << m.cols() << " nnz " << m.nnz() << "\n";
    os << "row_bins";
    for (int b : m.row_bins) os << ' ' << b;
    os << "\ncol_bins";
    for (int b : m.col_bins) os << ' ' << b;
    os << "\n";
    os.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
            os << r << ' ' << m.col_idx[k] << ' ' << m.values[k] << "\n";
}

inline TransitionMatrix parse_matrix_dump(std::istream& is) {
    TransitionMatrix m;
    std::string tag;
    std::size_t rows, cols, nnz;
    is >> tag >> rows >> tag >> cols >> tag >> nnz;
    is >> tag;  // row_bins
    m.row_bins.resize(rows);
    for (auto& b : m.row_bins) is >> b;
    is >> tag;  // col_bins
    m.col_bins.resize(cols);
    for (auto& b : m.col_bins) is >> b;
    if (!is) throw DataError("malformed matrix dump header");

    std::vector<std::vector<std::pair<int, double>>> by_row(rows);
    for (std::size_t k = 0; k < nnz; ++k) {
        std::size_t r;
        int c;
        double v;
        is >> r >> c >> v;
        if (!is || r >= rows || c < 0 || static_cast<std::size_t>(c) >= cols)
            throw DataError("malformed matrix dump entry");
        by_row[r].emplace_back(c, v);
    }
    m.row_ptr.assign(rows + 1, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        std::sort(by_row[r].begin(), by_row[r].end());
        for (auto& [c, v] : by_row[r]) {
            m.col_idx.push_back(c);
            m.values.push_back(v);
        }
        m.row_ptr[r + 1] = m.values.size();
    }
    return m;
}

}  // namespace patchtrack
