#include "autocalib/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

namespace autocalib {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_pnm_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  return token;
}

int parse_pnm_int(std::istream& in, const std::string& path,
                  const char* what) {
  const std::string token = next_pnm_token(in);
  try {
    size_t pos = 0;
    const int value = std::stoi(token, &pos);
    if (pos != token.size() || value < 0) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParse,
                path + ": invalid " + what + " '" + token + "'");
  }
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot read " + path);
  }
  const std::string magic = next_pnm_token(in);
  if (magic != "P5") {
    throw Error(ErrorCode::kParse, path + ": not a binary PGM (P5) file");
  }
  Image image;
  image.width = parse_pnm_int(in, path, "width");
  image.height = parse_pnm_int(in, path, "height");
  const int maxval = parse_pnm_int(in, path, "maxval");
  if (image.width <= 0 || image.height <= 0) {
    throw Error(ErrorCode::kParse, path + ": empty image");
  }
  if (maxval <= 0 || maxval > 255) {
    throw Error(ErrorCode::kParse, path + ": unsupported maxval");
  }
  // The single whitespace byte after maxval was already consumed by the
  // token reader.
  image.pixels.resize(static_cast<size_t>(image.width) * image.height);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
    throw Error(ErrorCode::kParse, path + ": truncated pixel data");
  }
  return image;
}

void write_pgm(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path);
  }
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed: " + path);
  }
}

double bilinear_sample(const Image& image, double x, double y) {
  if (x < 0.0 || y < 0.0 || x > image.width - 1.0 || y > image.height - 1.0) {
    return 0.0;
  }
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = (1.0 - ax) * image.at(x0, y0) + ax * image.at(x1, y0);
  const double bottom = (1.0 - ax) * image.at(x0, y1) + ax * image.at(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

Image rectify_image(const Image& image, const RectificationMap& map) {
  if (image.width != map.width || image.height != map.height) {
    throw Error(ErrorCode::kDimensionMismatch,
                "rectify_image: map and image sizes differ");
  }
  Image out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Eigen::Vector2d& s = map.at(x, y);
      const double v = bilinear_sample(image, s.x(), s.y());
      out.at(x, y) = static_cast<uint8_t>(
          std::min(255.0, std::max(0.0, std::round(v))));
    }
  }
  return out;
}

double ssim_mean(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::kDimensionMismatch, "ssim_mean: sizes differ");
  }
  constexpr int kWin = 8;
  if (a.width < kWin || a.height < kWin) {
    throw Error(ErrorCode::kDimensionMismatch,
                "ssim_mean: image smaller than the 8x8 window");
  }
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

  // Summed-area tables for x, y, x^2, y^2, xy; one guard row/column of zeros.
  const int w = a.width, h = a.height;
  const size_t stride = static_cast<size_t>(w) + 1;
  std::vector<double> sx(stride * (h + 1), 0.0), sy(sx), sxx(sx), syy(sx),
      sxy(sx);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double va = a.at(x, y);
      const double vb = b.at(x, y);
      const size_t i = static_cast<size_t>(y + 1) * stride + (x + 1);
      const size_t up = i - stride;
      sx[i] = va + sx[i - 1] + sx[up] - sx[up - 1];
      sy[i] = vb + sy[i - 1] + sy[up] - sy[up - 1];
      sxx[i] = va * va + sxx[i - 1] + sxx[up] - sxx[up - 1];
      syy[i] = vb * vb + syy[i - 1] + syy[up] - syy[up - 1];
      sxy[i] = va * vb + sxy[i - 1] + sxy[up] - sxy[up - 1];
    }
  }
  auto window_sum = [&](const std::vector<double>& s, int x, int y) {
    const size_t i0 = static_cast<size_t>(y) * stride + x;
    const size_t i1 = static_cast<size_t>(y + kWin) * stride + (x + kWin);
    return s[i1] - s[static_cast<size_t>(y) * stride + (x + kWin)] -
           s[static_cast<size_t>(y + kWin) * stride + x] + s[i0];
  };

  const double n = kWin * kWin;
  double total = 0.0;
  long count = 0;
  for (int y = 0; y + kWin <= h; ++y) {
    for (int x = 0; x + kWin <= w; ++x) {
      const double mx = window_sum(sx, x, y) / n;
      const double my = window_sum(sy, x, y) / n;
      const double vx = window_sum(sxx, x, y) / n - mx * mx;
      const double vy = window_sum(syy, x, y) / n - my * my;
      const double cov = window_sum(sxy, x, y) / n - mx * my;
      const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace autocalib
