#include "tadlab/kdtree.hpp"

#include <algorithm>

namespace tadlab::detectors {

namespace {

// Max-heap ordering: the worst (largest) candidate sits on top.
struct WorseFirst {
    bool operator()(const Neighbor& a, const Neighbor& b) const { return a < b; }
};

void offer(std::vector<Neighbor>& heap, std::size_t k, Neighbor cand) {
    if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), WorseFirst{});
    } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end(), WorseFirst{});
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), WorseFirst{});
    }
}

}  // namespace

KdTree::KdTree(const Matrix& points, std::size_t leaf_size)
    : points_(&points), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    if (points.rows == 0 || points.cols == 0) throw ContractError("kdtree: empty point set");
    perm_.resize(points.rows);
    for (std::size_t i = 0; i < points.rows; ++i) perm_[i] = i;
    nodes_.reserve(2 * points.rows / leaf_size_ + 4);
    build(0, points.rows);
}

std::int64_t KdTree::build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return static_cast<std::int64_t>(id);

    const Matrix& p = *points_;
    std::size_t dim = 0;
    double widest = -1.0;
    for (std::size_t j = 0; j < p.cols; ++j) {
        double lo = p(perm_[begin], j), hi = lo;
        for (std::size_t i = begin + 1; i < end; ++i) {
            const double v = p(perm_[i], j);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > widest) {
            widest = hi - lo;
            dim = j;
        }
    }
    if (widest <= 0.0) return static_cast<std::int64_t>(id);  // all points identical

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(begin),
                     perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                     perm_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                         const double va = p(a, dim), vb = p(b, dim);
                         return va < vb || (va == vb && a < b);
                     });

    nodes_[id].split_dim = dim;
    nodes_[id].split_val = p(perm_[mid], dim);
    const std::int64_t left = build(begin, mid);
    const std::int64_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return static_cast<std::int64_t>(id);
}

void KdTree::search(std::int64_t node, const double* q, std::size_t k,
                    std::vector<Neighbor>& heap) const {
    const Node& nd = nodes_[static_cast<std::size_t>(node)];
    const Matrix& p = *points_;
    if (nd.left < 0) {
        for (std::size_t i = nd.begin; i < nd.end; ++i) {
            const std::size_t idx = perm_[i];
            offer(heap, k, Neighbor{sq_dist(q, p.row(idx), p.cols), idx});
        }
        return;
    }

    const double delta = q[nd.split_dim] - nd.split_val;
    const std::int64_t near = delta < 0.0 ? nd.left : nd.right;
    const std::int64_t far = delta < 0.0 ? nd.right : nd.left;
    search(near, q, k, heap);
    // Equal plane distance can still hide a lower-index tie, so only a
    // strictly farther plane is pruned.
    if (heap.size() < k || delta * delta <= heap.front().d2) search(far, q, k, heap);
}

std::vector<Neighbor> KdTree::query(const double* q, std::size_t k) const {
    k = std::min(k, points_->rows);
    std::vector<Neighbor> heap;
    heap.reserve(k + 1);
    search(0, q, k, heap);
    std::sort(heap.begin(), heap.end());
    return heap;
}

std::vector<Neighbor> scan_neighbors(const Matrix& points, const double* q, std::size_t k) {
    k = std::min(k, points.rows);
    std::vector<Neighbor> heap;
    heap.reserve(k + 1);
    for (std::size_t i = 0; i < points.rows; ++i)
        offer(heap, k, Neighbor{sq_dist(q, points.row(i), points.cols), i});
    std::sort(heap.begin(), heap.end());
    return heap;
}

}  // namespace tadlab::detectors
