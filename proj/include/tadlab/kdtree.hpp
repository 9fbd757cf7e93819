#pragma once

#include <vector>

#include "tadlab/common.hpp"

namespace tadlab::detectors {

// One neighbor candidate; ordering is (distance, index) lexicographic so
// equidistant neighbors resolve to the lowest row index.
struct Neighbor {
    double d2 = 0.0;
    std::size_t idx = 0;

    bool operator<(const Neighbor& o) const {
        return d2 < o.d2 || (d2 == o.d2 && idx < o.idx);
    }
};

// Exact k-nearest-neighbor index over the rows of a matrix. Median-split
// tree on the widest dimension; far subtrees are pruned only when their
// splitting plane lies strictly beyond the current worst candidate, which
// keeps the (distance, index) tie order identical to a full scan.
// The indexed matrix must outlive the tree.
class KdTree {
public:
    explicit KdTree(const Matrix& points, std::size_t leaf_size = 16);

    // k best neighbors of q (length = tree dimension), sorted ascending by
    // (distance, index). k is clamped to the number of points.
    std::vector<Neighbor> query(const double* q, std::size_t k) const;

    std::size_t size() const { return points_->rows; }

private:
    struct Node {
        std::size_t begin = 0, end = 0;  // leaf range into perm_
        std::size_t split_dim = 0;
        double split_val = 0.0;
        std::int64_t left = -1, right = -1;  // -1 marks a leaf
    };

    std::int64_t build(std::size_t begin, std::size_t end);
    void search(std::int64_t node, const double* q, std::size_t k,
                std::vector<Neighbor>& heap) const;

    const Matrix* points_;
    std::size_t leaf_size_;
    std::vector<std::size_t> perm_;
    std::vector<Node> nodes_;
};

// Brute-force fallback with the same (distance, index) contract; used for
// high-dimensional data where the tree degenerates.
std::vector<Neighbor> scan_neighbors(const Matrix& points, const double* q, std::size_t k);

}  // namespace tadlab::detectors
