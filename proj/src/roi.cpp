#include "thermaltap/roi.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace thermaltap::roi {

namespace fs = std::filesystem;

Mask segment_classical(const Matrix& temps, double ambient_c, const SegmenterConfig& config) {
    BitGrid bits(temps.height(), temps.width(), 0);
    for (size_t i = 0; i < temps.size(); ++i) {
        bits.raw()[i] = temps.raw()[i] - ambient_c >= config.contrast_c ? 1 : 0;
    }
    bits = morphological_close(morphological_open(bits));
    Mask mask;
    mask.bits = largest_component(bits);
    mask.source = MaskSource::classical_segmenter;
    return mask;
}

BitGrid erode3(const BitGrid& bits) {
    const int h = bits.height(), w = bits.width();
    BitGrid out(h, w, 0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            uint8_t keep = 1;
            for (int dr = -1; dr <= 1 && keep; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    // outside the grid counts as background
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w || !bits.at(rr, cc)) {
                        keep = 0;
                        break;
                    }
                }
            }
            out.at(r, c) = keep;
        }
    }
    return out;
}

BitGrid dilate3(const BitGrid& bits) {
    const int h = bits.height(), w = bits.width();
    BitGrid out(h, w, 0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!bits.at(r, c)) continue;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < h && cc >= 0 && cc < w) out.at(rr, cc) = 1;
                }
            }
        }
    }
    return out;
}

BitGrid morphological_open(const BitGrid& bits) { return dilate3(erode3(bits)); }
BitGrid morphological_close(const BitGrid& bits) { return erode3(dilate3(bits)); }

BitGrid largest_component(const BitGrid& bits) {
    const int h = bits.height(), w = bits.width();
    std::vector<int> label(bits.size(), -1);
    std::vector<size_t> area;
    std::vector<size_t> stack;
    for (size_t i = 0; i < bits.size(); ++i) {
        if (!bits.raw()[i] || label[i] >= 0) continue;
        const int id = static_cast<int>(area.size());
        size_t count = 0;
        stack.push_back(i);
        label[i] = id;
        while (!stack.empty()) {
            const size_t p = stack.back();
            stack.pop_back();
            ++count;
            const int r = static_cast<int>(p) / w, c = static_cast<int>(p) % w;
            const int nr[4] = {r - 1, r + 1, r, r};
            const int nc[4] = {c, c, c - 1, c + 1};
            for (int k = 0; k < 4; ++k) {
                if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
                const size_t q = static_cast<size_t>(nr[k]) * w + nc[k];
                if (bits.raw()[q] && label[q] < 0) {
                    label[q] = id;
                    stack.push_back(q);
                }
            }
        }
        area.push_back(count);
    }
    if (area.empty()) return BitGrid(h, w, 0);
    const int best = static_cast<int>(std::max_element(area.begin(), area.end()) - area.begin());
    BitGrid out(h, w, 0);
    for (size_t i = 0; i < bits.size(); ++i) out.raw()[i] = label[i] == best ? 1 : 0;
    return out;
}

std::vector<std::pair<double, double>> convex_hull(std::vector<std::pair<double, double>> points) {
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    const size_t n = points.size();
    if (n <= 2) return points;

    // Monotone chain over exact integer coordinates would be ideal; corner
    // points are integral, so scale-free double arithmetic stays exact here.
    auto cross_d = [](const std::pair<double, double>& o, const std::pair<double, double>& a,
                      const std::pair<double, double>& b) {
        return (a.first - o.first) * (b.second - o.second) -
               (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross_d(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross_d(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);  // last point repeats the first
    return hull;
}

double polygon_area(const std::vector<std::pair<double, double>>& polygon) {
    if (polygon.size() < 3) return 0.0;
    double twice = 0.0;
    for (size_t i = 0; i < polygon.size(); ++i) {
        const auto& [x0, y0] = polygon[i];
        const auto& [x1, y1] = polygon[(i + 1) % polygon.size()];
        twice += x0 * y1 - x1 * y0;
    }
    return std::abs(twice) / 2.0;
}

MaskQuality mask_geometry(const BitGrid& bits, const ValidationLimits& limits) {
    const BitGrid comp = largest_component(bits);
    MaskQuality q;
    const int h = comp.height(), w = comp.width();
    std::vector<std::pair<double, double>> corners;
    int r0 = h, c0 = w, r1 = -1, c1 = -1;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!comp.at(r, c)) continue;
            ++q.component_area;
            r0 = std::min(r0, r);
            c0 = std::min(c0, c);
            r1 = std::max(r1, r);
            c1 = std::max(c1, c);
            // each pixel contributes its four unit-square corners (x=col, y=row)
            corners.emplace_back(c, r);
            corners.emplace_back(c + 1, r);
            corners.emplace_back(c, r + 1);
            corners.emplace_back(c + 1, r + 1);
        }
    }
    if (q.component_area == 0) return q;  // zeroed, invalid

    q.row0 = r0;
    q.col0 = c0;
    q.row1 = r1;
    q.col1 = c1;
    q.aspect_ratio = static_cast<double>(c1 - c0 + 1) / static_cast<double>(r1 - r0 + 1);
    const double hull_area = polygon_area(convex_hull(std::move(corners)));
    q.solidity = hull_area > 0.0 ? q.component_area / hull_area : 0.0;
    q.valid = validate_mask(q, limits);
    return q;
}

bool validate_mask(const MaskQuality& q, const ValidationLimits& limits) {
    return q.component_area > 0 && q.aspect_ratio >= limits.min_aspect &&
           q.aspect_ratio <= limits.max_aspect && q.solidity >= limits.min_solidity;
}

BitGrid load_mask(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open mask: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string content = ss.str();

    std::vector<uint8_t> values;
    int width = -1, rows = 0;
    const char* p = content.data();
    const char* end = p + content.size();
    while (p < end) {
        const char* line_end = std::find(p, end, '\n');
        const char* eff = line_end;
        if (eff > p && eff[-1] == '\r') --eff;
        if (eff > p) {
            int count = 0;
            const char* q = p;
            while (q < eff) {
                if (*q == '0' || *q == '1') {
                    values.push_back(static_cast<uint8_t>(*q - '0'));
                    ++count;
                    ++q;
                } else {
                    throw ValueError("mask cell must be 0 or 1 in " + path.string());
                }
                if (q < eff && *q == ',') ++q;
            }
            if (width < 0) {
                width = count;
            } else if (count != width) {
                throw ParseError("ragged mask CSV at row " + std::to_string(rows) + " in " +
                                 path.string());
            }
            ++rows;
        }
        p = line_end == end ? end : line_end + 1;
    }
    if (rows == 0 || width <= 0) throw ParseError("empty mask CSV: " + path.string());
    BitGrid bits(rows, width);
    bits.raw() = std::move(values);
    return bits;
}

void write_mask_csv(const BitGrid& bits, const fs::path& path) {
    std::string out;
    out.reserve(bits.size() * 2);
    for (int r = 0; r < bits.height(); ++r) {
        for (int c = 0; c < bits.width(); ++c) {
            if (c) out.push_back(',');
            out.push_back(bits.at(r, c) ? '1' : '0');
        }
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace thermaltap::roi
