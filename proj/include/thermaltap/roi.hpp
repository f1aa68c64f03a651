#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "thermaltap/common.hpp"

namespace thermaltap::roi {

enum class MaskSource { ingested, classical_segmenter };

struct Mask {
    BitGrid bits;
    MaskSource source = MaskSource::classical_segmenter;

    int height() const { return bits.height(); }
    int width() const { return bits.width(); }
};

// Geometry of the largest 4-connected component plus the validity verdict.
struct MaskQuality {
    int component_area = 0;
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive bbox of the component
    double aspect_ratio = 0.0;                   // bbox width / bbox height
    double solidity = 0.0;                       // area / corner-point hull area
    bool valid = false;
};

struct SegmenterConfig {
    double contrast_c = 3.0;  // foreground = T - ambient >= this
};

struct ValidationLimits {
    double min_aspect = 1.3;
    double max_aspect = 2.8;
    double min_solidity = 0.80;
};

Mask segment_classical(const Matrix& temps, double ambient_c, const SegmenterConfig& config = {});

// Largest 4-connected foreground component; empty input stays empty.
BitGrid largest_component(const BitGrid& bits);

// 3x3 box erosion/dilation building blocks for open/close.
BitGrid erode3(const BitGrid& bits);
BitGrid dilate3(const BitGrid& bits);
BitGrid morphological_open(const BitGrid& bits);
BitGrid morphological_close(const BitGrid& bits);

// Convex hull (monotone chain) of a point set, CCW, no duplicate endpoint.
std::vector<std::pair<double, double>> convex_hull(std::vector<std::pair<double, double>> points);
double polygon_area(const std::vector<std::pair<double, double>>& polygon);

// Geometry of the largest component; empty mask yields a zeroed, invalid quality.
MaskQuality mask_geometry(const BitGrid& bits, const ValidationLimits& limits = {});
inline MaskQuality mask_geometry(const Mask& mask, const ValidationLimits& limits = {}) {
    return mask_geometry(mask.bits, limits);
}

bool validate_mask(const MaskQuality& q, const ValidationLimits& limits = {});

BitGrid load_mask(const std::filesystem::path& path);
void write_mask_csv(const BitGrid& bits, const std::filesystem::path& path);

}  // namespace thermaltap::roi
