#include "render.hpp"

#include <cstdio>
#include <fstream>

namespace posecode::cli {

namespace {

struct Rgb {
  unsigned char r, g, b;
};

constexpr Rgb kPalette[5] = {{200, 60, 40}, {40, 90, 200}, {30, 30, 30},
                             {40, 160, 70}, {170, 120, 30}};

class Canvas {
 public:
  explicit Canvas(int size) : size_(size), pixels_(static_cast<size_t>(size) * size * 3, 255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= size_ || y >= size_) return;
    const size_t at = 3 * (static_cast<size_t>(y) * size_ + x);
    pixels_[at] = c.r;
    pixels_[at + 1] = c.g;
    pixels_[at + 2] = c.b;
  }

  void dot(int x, int y, Rgb c) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) set(x + dx, y + dy, c);
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void write_ppm(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path.string());
    out << "P6\n" << size_ << " " << size_ << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels_.data()),
              static_cast<std::streamsize>(pixels_.size()));
    if (!out) throw DataError("short write on image: " + path.string());
  }

 private:
  int size_;
  std::vector<unsigned char> pixels_;
};

}  // namespace

int render_pose_sequence(const PoseSequence& seq, const std::filesystem::path& out_dir,
                         int image_size) {
  seq.validate();
  std::filesystem::create_directories(out_dir);
  const int dims = seq.spec.dims;

  // Fixed viewport over the whole sequence so frames are comparable.
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int j = 0; j < seq.spec.joints; ++j) {
    xmin = std::min(xmin, seq.frames.col(j * dims + 0).minCoeff());
    xmax = std::max(xmax, seq.frames.col(j * dims + 0).maxCoeff());
    if (dims > 1) {
      ymin = std::min(ymin, seq.frames.col(j * dims + 1).minCoeff());
      ymax = std::max(ymax, seq.frames.col(j * dims + 1).maxCoeff());
    }
  }
  if (dims == 1) {
    ymin = 0.0;
    ymax = 1.0;
  }
  const double xspan = std::max(xmax - xmin, 1e-9);
  const double yspan = std::max(ymax - ymin, 1e-9);
  const double margin = 0.08 * image_size;
  const double scale = (image_size - 2 * margin) / std::max(xspan, yspan);

  auto to_px = [&](double x, double y, int& px, int& py) {
    px = static_cast<int>(margin + (x - xmin) * scale);
    // Flip y so larger coordinates render upward.
    py = static_cast<int>(image_size - margin - (y - ymin) * scale);
    px = std::clamp(px, 0, image_size - 1);
    py = std::clamp(py, 0, image_size - 1);
  };

  char name[64];
  for (int f = 0; f < seq.frame_count(); ++f) {
    Canvas canvas(image_size);
    for (size_t gi = 0; gi < seq.spec.groups.size(); ++gi) {
      const auto& group = seq.spec.groups[gi];
      const Rgb color = kPalette[gi % 5];
      int prev_x = 0, prev_y = 0;
      for (int j = group.begin; j < group.end; ++j) {
        const double x = seq.frames(f, j * dims + 0);
        const double y = dims > 1 ? seq.frames(f, j * dims + 1) : 0.5;
        int px, py;
        to_px(x, y, px, py);
        canvas.dot(px, py, color);
        if (j > group.begin) canvas.line(prev_x, prev_y, px, py, color);
        prev_x = px;
        prev_y = py;
      }
    }
    std::snprintf(name, sizeof(name), "frame_%05d.ppm", f);
    canvas.write_ppm(out_dir / name);
  }
  return seq.frame_count();
}

}  // namespace posecode::cli
