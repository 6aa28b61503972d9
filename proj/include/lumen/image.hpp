#pragma once

#include <stdexcept>
#include <vector>

namespace lumen {

// Linear HDR images, float32 storage to match the on-disk containers.
struct ImageRgb {
    int width = 0, height = 0;
    std::vector<float> data; // interleaved RGB, row-major, top row first

    ImageRgb() = default;
    ImageRgb(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.f) {
        if (w < 1 || h < 1) throw std::invalid_argument("image: resolution must be positive");
    }
    float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct ImageGray {
    int width = 0, height = 0;
    std::vector<float> data;

    ImageGray() = default;
    ImageGray(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.f) {
        if (w < 1 || h < 1) throw std::invalid_argument("image: resolution must be positive");
    }
    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

} // namespace lumen
