#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "seqgoal/errors.hpp"
#include "seqgoal/rng.hpp"

namespace seqgoal {

// Axis-aligned box, closed on all sides.
struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool contains(double x, double y) const {
        return x >= x0 && x <= x1 && y >= y0 && y <= y1;
    }
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

// Maze free space as a union of axis-aligned boxes; everything else is wall.
// Motion queries sample at kProbeStep, far below any wall feature size.
class MazeGeometry {
public:
    static constexpr double kProbeStep = 0.01;

    MazeGeometry() = default;
    explicit MazeGeometry(std::vector<Box> free_boxes) : boxes_(std::move(free_boxes)) {
        for (const Box& b : boxes_) {
            if (b.x1 <= b.x0 || b.y1 <= b.y0) throw GeometryError("degenerate free box");
        }
    }

    bool empty() const { return boxes_.empty(); }
    const std::vector<Box>& free_boxes() const { return boxes_; }

    bool free_point(double x, double y) const {
        for (const Box& b : boxes_)
            if (b.contains(x, y)) return true;
        return false;
    }

    Box bounds() const {
        Box r = boxes_.empty() ? Box{} : boxes_.front();
        for (const Box& b : boxes_) {
            r.x0 = std::min(r.x0, b.x0);
            r.y0 = std::min(r.y0, b.y0);
            r.x1 = std::max(r.x1, b.x1);
            r.y1 = std::max(r.y1, b.y1);
        }
        return r;
    }

    // Walks the segment in kProbeStep increments. Returns true if every probe
    // is free; otherwise *stop becomes the last free point before the hit.
    bool sweep_segment(const Eigen::Vector2d& from, const Eigen::Vector2d& to,
                       Eigen::Vector2d* stop = nullptr) const {
        const double len = (to - from).norm();
        const int n = std::max(1, static_cast<int>(std::ceil(len / kProbeStep)));
        Eigen::Vector2d last = from;
        for (int i = 1; i <= n; ++i) {
            const Eigen::Vector2d p = from + (to - from) * (static_cast<double>(i) / n);
            if (!free_point(p.x(), p.y())) {
                if (stop) *stop = last;
                return false;
            }
            last = p;
        }
        return true;
    }

    // Uniform over the bounding rectangle, rejecting wall interiors.
    Eigen::Vector2d sample_free(Rng& rng, int max_tries = 1000) const {
        const Box b = bounds();
        for (int i = 0; i < max_tries; ++i) {
            const double x = rng.uniform(b.x0, b.x1);
            const double y = rng.uniform(b.y0, b.y1);
            if (free_point(x, y)) return {x, y};
        }
        throw GeometryError("rejection sampling failed: free space too thin?");
    }

private:
    std::vector<Box> boxes_;
};

}  // namespace seqgoal
