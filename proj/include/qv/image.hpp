#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qv {

// Row-major single-channel image with value semantics.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<size_t>(width) * static_cast<size_t>(height), fill) {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("Image: dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int x, int y) { return data_[idx(x, y)]; }
    const T& operator()(int x, int y) const { return data_[idx(x, y)]; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    // Edge-replicated read; safe for any coordinates.
    T at_clamped(int x, int y) const {
        x = std::clamp(x, 0, width_ - 1);
        y = std::clamp(y, 0, height_ - 1);
        return data_[idx(x, y)];
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool same_size(int w, int h) const { return width_ == w && height_ == h; }
    template <typename U>
    bool same_size(const Image<U>& o) const { return same_size(o.width(), o.height()); }

    friend bool operator==(const Image& a, const Image& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

private:
    size_t idx(int x, int y) const {
        return static_cast<size_t>(y) * static_cast<size_t>(width_) + static_cast<size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using ImageF = Image<double>;

template <typename T>
double image_mean(const Image<T>& img) {
    if (img.empty()) return 0.0;
    double s = 0.0;
    for (const T& v : img) s += static_cast<double>(v);
    return s / static_cast<double>(img.size());
}

template <typename A, typename B>
void require_same_size(const Image<A>& a, const Image<B>& b, const char* what) {
    if (!a.same_size(b))
        throw std::invalid_argument(std::string(what) + ": image dimensions differ");
}

}  // namespace qv
