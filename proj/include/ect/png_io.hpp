#ifndef ECT_PNG_IO_HPP
#define ECT_PNG_IO_HPP

#include <string>

#include "ect/types.hpp"

namespace ect::png {

/// 8-bit grayscale, raw values 0..255 (palette/RGB inputs are converted).
MatX read_gray8(const std::string& path);

/// 16-bit grayscale, raw values 0..65535 (8-bit files are promoted by x257).
MatX read_gray16(const std::string& path);

/// 8-bit RGB, channels scaled to [0,1].
Image<Real> read_rgb8(const std::string& path);

/// Probabilities in [0,1] written as round(255 * p).
void write_gray8(const std::string& path, const MatX& values01);

/// Raw 0..255 values (rounded, clamped).
void write_gray8_raw(const std::string& path, const MatX& values);

/// Raw 0..65535 values (rounded, clamped).
void write_gray16(const std::string& path, const MatX& values);

void write_rgb8(const std::string& path, const Image<Real>& image);

}  // namespace ect::png

#endif  // ECT_PNG_IO_HPP
