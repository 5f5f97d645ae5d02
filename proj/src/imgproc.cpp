#include "lsd/imgproc.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace lsd {

namespace {

// Mirror index without repeating the edge sample (…cb|abc…|ba…).
inline Eigen::Index reflect101(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Pads `src` by `pad` on every side using reflect101.
Plane<float> pad_reflect(const Plane<float>& src, Eigen::Index row0, Eigen::Index col0, Eigen::Index rows,
                         Eigen::Index cols, Eigen::Index pad) {
  Plane<float> out(rows + 2 * pad, cols + 2 * pad);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto sr = reflect101(row0 + r - pad, src.rows());
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = src(sr, reflect101(col0 + c - pad, src.cols()));
  }
  return out;
}

// Correlates a padded plane with a square kernel; output size = padded size - (k - 1).
Plane<float> correlate_valid(const Plane<float>& padded, const Plane<double>& kernel) {
  const Eigen::Index k = kernel.rows();
  const Eigen::Index rows = padded.rows() - k + 1;
  const Eigen::Index cols = padded.cols() - k + 1;
  Plane<float> out = Plane<float>::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    float* dst = out.data() + r * cols;
    for (Eigen::Index ky = 0; ky < k; ++ky) {
      const float* src_row = padded.data() + (r + ky) * padded.cols();
      for (Eigen::Index kx = 0; kx < k; ++kx) {
        const auto w = static_cast<float>(kernel(ky, kx));
        const float* src = src_row + kx;
        for (Eigen::Index c = 0; c < cols; ++c) dst[c] += w * src[c];
      }
    }
  }
  return out;
}

Plane<float> gaussian_blur5(const GrayImage& gray, double sigma) {
  std::array<float, 5> k{};
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) sum += (k[i + 2] = static_cast<float>(std::exp(-(i * i) / (2 * sigma * sigma))));
  for (auto& v : k) v = static_cast<float>(v / sum);
  const Eigen::Index rows = gray.rows();
  const Eigen::Index cols = gray.cols();
  Plane<float> tmp(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      float acc = 0.0f;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * gray(r, reflect101(c + i, cols));
      tmp(r, c) = acc;
    }
  Plane<float> out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      float acc = 0.0f;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * tmp(reflect101(r + i, rows), c);
      out(r, c) = acc;
    }
  return out;
}

void sobel(const Plane<float>& img, Plane<float>& gx, Plane<float>& gy) {
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  gx.resize(rows, cols);
  gy.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto rm = reflect101(r - 1, rows);
    const auto rp = reflect101(r + 1, rows);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto cm = reflect101(c - 1, cols);
      const auto cp = reflect101(c + 1, cols);
      gx(r, c) = (img(rm, cp) + 2 * img(r, cp) + img(rp, cp)) - (img(rm, cm) + 2 * img(r, cm) + img(rp, cm));
      gy(r, c) = (img(rp, cm) + 2 * img(rp, c) + img(rp, cp)) - (img(rm, cm) + 2 * img(rm, c) + img(rm, cp));
    }
  }
}

constexpr double kEdtInf = 1e20;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over one line.
void dt1d(const double* f, Eigen::Index n, double* d, std::vector<Eigen::Index>& v, std::vector<double>& z) {
  Eigen::Index k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (Eigen::Index q = 1; q < n; ++q) {
    const double fq = f[q] + static_cast<double>(q * q);
    double s = (fq - (f[v[k]] + static_cast<double>(v[k] * v[k]))) / static_cast<double>(2 * q - 2 * v[k]);
    while (s <= z[k]) {
      --k;
      s = (fq - (f[v[k]] + static_cast<double>(v[k] * v[k]))) / static_cast<double>(2 * q - 2 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (Eigen::Index q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const auto dq = q - v[k];
    d[q] = static_cast<double>(dq * dq) + f[v[k]];
  }
}

}  // namespace

GrayImage rgb_to_gray(const RgbImage& img) {
  GrayImage out(img.rows(), img.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const unsigned v = 299u * img.r.data()[i] + 587u * img.g.data()[i] + 114u * img.b.data()[i] + 500u;
    out.data()[i] = static_cast<std::uint8_t>(v / 1000u);
  }
  return out;
}

Eigen::Vector3f rgb_to_hsv(float r, float g, float b) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float delta = mx - mn;
  float h = 0.0f;
  if (delta > 0.0f) {
    if (mx == r)
      h = 60.0f * std::fmod((g - b) / delta, 6.0f);
    else if (mx == g)
      h = 60.0f * ((b - r) / delta + 2.0f);
    else
      h = 60.0f * ((r - g) / delta + 4.0f);
    if (h < 0.0f) h += 360.0f;
    if (h >= 360.0f) h -= 360.0f;
  }
  const float s = mx > 0.0f ? delta / mx : 0.0f;
  return {h, s, mx / 255.0f};
}

Eigen::Vector3f hsv_to_rgb(float h, float s, float v) {
  const float c = v * s;
  const float hp = std::fmod(h, 360.0f) / 60.0f;
  const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
  Eigen::Vector3f rgb;
  if (hp < 1)
    rgb = {c, x, 0};
  else if (hp < 2)
    rgb = {x, c, 0};
  else if (hp < 3)
    rgb = {0, c, x};
  else if (hp < 4)
    rgb = {0, x, c};
  else if (hp < 5)
    rgb = {x, 0, c};
  else
    rgb = {c, 0, x};
  return (rgb.array() + (v - c)) * 255.0f;
}

HsvImage rgb_to_hsv(const RgbImage& img) {
  HsvImage out{FloatImage(img.rows(), img.cols()), FloatImage(img.rows(), img.cols()),
               FloatImage(img.rows(), img.cols())};
  for (Eigen::Index i = 0; i < img.r.size(); ++i) {
    const auto hsv = rgb_to_hsv(img.r.data()[i], img.g.data()[i], img.b.data()[i]);
    out.h.data()[i] = hsv[0];
    out.s.data()[i] = hsv[1];
    out.v.data()[i] = hsv[2];
  }
  return out;
}

FloatImage smoothed_gradient_magnitude(const GrayImage& gray) {
  Plane<float> gx, gy;
  sobel(gaussian_blur5(gray, kCannySigma), gx, gy);
  return (gx.square() + gy.square()).sqrt();
}

Mask canny(const GrayImage& gray, double threshold) {
  if (threshold < 0) throw std::invalid_argument("canny threshold must be non-negative");
  const Eigen::Index rows = gray.rows();
  const Eigen::Index cols = gray.cols();
  Plane<float> gx, gy;
  sobel(gaussian_blur5(gray, kCannySigma), gx, gy);
  const Plane<float> mag = (gx.square() + gy.square()).sqrt();
  const auto high = static_cast<float>(threshold);
  const auto low = static_cast<float>(threshold / 2.0);

  // 0 none, 1 weak, 2 strong
  Plane<std::uint8_t> cls = Plane<std::uint8_t>::Zero(rows, cols);
  const float tan22 = 0.41421356f;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const float m = mag(r, c);
      if (!(m > low)) continue;
      const float ax = std::abs(gx(r, c));
      const float ay = std::abs(gy(r, c));
      int dr = 0;
      int dc = 0;
      if (ay <= tan22 * ax) {
        dc = 1;
      } else if (ax <= tan22 * ay) {
        dr = 1;
      } else {
        dr = 1;
        dc = (gx(r, c) * gy(r, c) > 0) ? 1 : -1;
      }
      const float before = mag(reflect101(r - dr, rows), reflect101(c - dc, cols));
      const float after = mag(reflect101(r + dr, rows), reflect101(c + dc, cols));
      if (m > before && m >= after) cls(r, c) = m > high ? 2 : 1;
    }
  }

  Mask edges = Mask::Zero(rows, cols);
  std::vector<Eigen::Index> stack;
  for (Eigen::Index i = 0; i < cls.size(); ++i) {
    if (cls.data()[i] != 2 || edges.data()[i]) continue;
    edges.data()[i] = 1;
    stack.push_back(i);
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      const auto pr = p / cols;
      const auto pc = p % cols;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const auto nr = pr + dr;
          const auto nc = pc + dc;
          if (nr < 0 || nc < 0 || nr >= rows || nc >= cols) continue;
          const auto q = nr * cols + nc;
          if (cls.data()[q] && !edges.data()[q]) {
            edges.data()[q] = 1;
            stack.push_back(q);
          }
        }
    }
  }
  return edges;
}

Grid edt_squared(const Mask& mask) {
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  Grid g(rows, cols);
  for (Eigen::Index i = 0; i < mask.size(); ++i) g.data()[i] = mask.data()[i] ? 0.0 : kEdtInf;
  const Eigen::Index n = std::max(rows, cols);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<Eigen::Index> v(n);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) f[r] = g(r, c);
    dt1d(f.data(), rows, d.data(), v, z);
    for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = d[r];
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) f[c] = g(r, c);
    dt1d(f.data(), cols, d.data(), v, z);
    for (Eigen::Index c = 0; c < cols; ++c) g(r, c) = d[c];
  }
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g.data()[i] >= 0.5 * kEdtInf) g.data()[i] = std::numeric_limits<double>::infinity();
  return g;
}

FloatImage edt(const Mask& mask) { return edt_squared(mask).sqrt().cast<float>(); }

void GaborParams::validate() const {
  if (kernel_size < 3 || kernel_size % 2 == 0) throw std::invalid_argument("gabor kernel size must be odd and >= 3");
  if (!(sigma > 0)) throw std::invalid_argument("gabor sigma must be positive");
  for (double l : wavelengths)
    if (!(l > 0)) throw std::invalid_argument("gabor wavelength must be positive");
}

Plane<double> gabor_kernel(const GaborParams& p, double wavelength, double theta) {
  const int r = p.radius();
  Plane<double> k(p.kernel_size, p.kernel_size);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double xp = x * ct + y * st;
      const double yp = -x * st + y * ct;
      const double env =
          std::exp(-(xp * xp + p.aspect_ratio * p.aspect_ratio * yp * yp) / (2.0 * p.sigma * p.sigma));
      k(y + r, x + r) = env * std::cos(2.0 * std::numbers::pi * xp / wavelength + p.phase);
    }
  return k;
}

Plane<double> gabor_mean_kernel(const GaborParams& p, double wavelength) {
  Plane<double> k = Plane<double>::Zero(p.kernel_size, p.kernel_size);
  for (double theta : p.orientations) k += gabor_kernel(p, wavelength, theta);
  return k / static_cast<double>(p.orientations.size());
}

std::array<FloatImage, 3> gabor_bank_window(const GrayImage& gray, const GaborParams& params, Eigen::Index row0,
                                            Eigen::Index col0, Eigen::Index rows, Eigen::Index cols) {
  params.validate();
  const Plane<float> src = gray.cast<float>();
  const Plane<float> padded = pad_reflect(src, row0, col0, rows, cols, params.radius());
  std::array<FloatImage, 3> out;
  for (std::size_t i = 0; i < 3; ++i)
    out[i] = correlate_valid(padded, gabor_mean_kernel(params, params.wavelengths[i]));
  return out;
}

std::array<FloatImage, 3> gabor_bank(const GrayImage& gray, const GaborParams& params) {
  return gabor_bank_window(gray, params, 0, 0, gray.rows(), gray.cols());
}

// ---------------------------------------------------------------------------

namespace {

Eigen::Index fft_friendly(Eigen::Index n) {
  for (Eigen::Index m = n;; ++m) {
    Eigen::Index k = m;
    for (Eigen::Index f : {2, 3, 5})
      while (k % f == 0) k /= f;
    if (k == 1) return m;
  }
}

// The FFTW planner is not thread-safe; execution with explicit arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
struct FftwDelete {
  void operator()(T* p) const { fftwf_free(p); }
};
template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwDelete<T>>;

template <class T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  auto* p = static_cast<T*>(fftwf_malloc(sizeof(T) * n));
  if (!p) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

}  // namespace

struct GaborBankFft::Impl {
  Eigen::Index rows = -1;
  Eigen::Index cols = -1;
  Eigen::Index frows = 0;
  Eigen::Index fcols = 0;
  std::size_t nspec = 0;
  FftwBuffer<float> real;
  FftwBuffer<fftwf_complex> image_spec;
  FftwBuffer<fftwf_complex> product;
  std::array<FftwBuffer<fftwf_complex>, 3> kernel_spec;
  fftwf_plan forward = nullptr;
  fftwf_plan inverse = nullptr;

  ~Impl() { release(); }
  void release() {
    std::lock_guard lock(fftw_planner_mutex());
    if (forward) fftwf_destroy_plan(forward);
    if (inverse) fftwf_destroy_plan(inverse);
    forward = inverse = nullptr;
  }
};

GaborBankFft::GaborBankFft(GaborParams params) : params_(params), impl_(std::make_unique<Impl>()) {
  params_.validate();
}

GaborBankFft::~GaborBankFft() = default;
GaborBankFft::GaborBankFft(GaborBankFft&&) noexcept = default;
GaborBankFft& GaborBankFft::operator=(GaborBankFft&&) noexcept = default;

std::array<FloatImage, 3> GaborBankFft::operator()(const GrayImage& gray) {
  Impl& s = *impl_;
  const Eigen::Index pad = params_.radius();
  const Eigen::Index k = params_.kernel_size;
  if (gray.rows() != s.rows || gray.cols() != s.cols) {
    s.release();
    s.rows = gray.rows();
    s.cols = gray.cols();
    s.frows = fft_friendly(s.rows + 2 * pad);
    s.fcols = fft_friendly(s.cols + 2 * pad);
    const auto nreal = static_cast<std::size_t>(s.frows * s.fcols);
    s.nspec = static_cast<std::size_t>(s.frows * (s.fcols / 2 + 1));
    s.real = fftw_alloc<float>(nreal);
    s.image_spec = fftw_alloc<fftwf_complex>(s.nspec);
    s.product = fftw_alloc<fftwf_complex>(s.nspec);
    {
      std::lock_guard lock(fftw_planner_mutex());
      const int n0 = static_cast<int>(s.frows), n1 = static_cast<int>(s.fcols);
      s.forward = fftwf_plan_dft_r2c_2d(n0, n1, s.real.get(), s.image_spec.get(), FFTW_ESTIMATE);
      s.inverse = fftwf_plan_dft_c2r_2d(n0, n1, s.product.get(), s.real.get(), FFTW_ESTIMATE);
    }
    if (!s.forward || !s.inverse) throw std::runtime_error("FFTW planning failed");
    // Kernel spectra carry the 1 / N normalization of the inverse transform.
    const float norm = 1.0f / static_cast<float>(nreal);
    for (int i = 0; i < 3; ++i) {
      const auto kern = gabor_mean_kernel(params_, params_.wavelengths[i]);
      std::fill(s.real.get(), s.real.get() + nreal, 0.0f);
      for (Eigen::Index y = 0; y < k; ++y)
        for (Eigen::Index x = 0; x < k; ++x) s.real[y * s.fcols + x] = static_cast<float>(kern(y, x)) * norm;
      s.kernel_spec[i] = fftw_alloc<fftwf_complex>(s.nspec);
      fftwf_execute_dft_r2c(s.forward, s.real.get(), s.kernel_spec[i].get());
    }
  }
  const Plane<float> padded = pad_reflect(gray.cast<float>(), 0, 0, s.rows, s.cols, pad);
  std::fill(s.real.get(), s.real.get() + s.frows * s.fcols, 0.0f);
  for (Eigen::Index y = 0; y < padded.rows(); ++y)
    std::copy(padded.data() + y * padded.cols(), padded.data() + (y + 1) * padded.cols(), s.real.get() + y * s.fcols);
  fftwf_execute_dft_r2c(s.forward, s.real.get(), s.image_spec.get());
  std::array<FloatImage, 3> out;
  for (int i = 0; i < 3; ++i) {
    const fftwf_complex* a = s.image_spec.get();
    const fftwf_complex* b = s.kernel_spec[i].get();
    fftwf_complex* p = s.product.get();
    for (std::size_t j = 0; j < s.nspec; ++j) {
      p[j][0] = a[j][0] * b[j][0] - a[j][1] * b[j][1];
      p[j][1] = a[j][0] * b[j][1] + a[j][1] * b[j][0];
    }
    fftwf_execute_dft_c2r(s.inverse, s.product.get(), s.real.get());
    // Full linear convolution index y + 2 * pad corresponds to output row y.
    out[i].resize(s.rows, s.cols);
    for (Eigen::Index y = 0; y < s.rows; ++y)
      std::copy_n(s.real.get() + (y + 2 * pad) * s.fcols + 2 * pad, s.cols, out[i].data() + y * s.cols);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};  // clockwise from west (y down)
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

int direction_index(int dx, int dy) {
  for (int i = 0; i < 8; ++i)
    if (kDx[i] == dx && kDy[i] == dy) return i;
  return -1;
}

}  // namespace

std::vector<Eigen::Vector2i> trace_contour(const Mask& comp, const Eigen::Vector2i& start) {
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < comp.cols() && y < comp.rows() && comp(y, x) != 0;
  };
  std::vector<Eigen::Vector2i> contour{start};
  Eigen::Vector2i p = start;
  int back = 0;  // the west neighbor of the start is background
  std::optional<Eigen::Vector2i> first_move;
  const std::size_t limit = static_cast<std::size_t>(comp.size()) * 4 + 8;
  while (contour.size() < limit) {
    int found = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (back + i) % 8;
      if (inside(p.x() + kDx[d], p.y() + kDy[d])) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    const Eigen::Vector2i q(p.x() + kDx[found], p.y() + kDy[found]);
    const int prev = (found + 7) % 8;
    const Eigen::Vector2i b(p.x() + kDx[prev], p.y() + kDy[prev]);
    if (p == start) {
      if (first_move && *first_move == q) break;
      if (!first_move) first_move = q;
    }
    back = direction_index(b.x() - q.x(), b.y() - q.y());
    p = q;
    contour.push_back(p);
  }
  if (contour.size() > 1 && contour.back() == start) contour.pop_back();
  return contour;
}

std::vector<RegionMask> extract_regions(const Mask& mask, Eigen::Index min_area_px) {
  if (min_area_px < 1) throw std::invalid_argument("min_area_px must be >= 1");
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  Plane<std::int32_t> label = Plane<std::int32_t>::Zero(rows, cols);
  std::vector<RegionMask> regions;
  std::vector<Eigen::Index> queue;
  std::int32_t next = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (!mask.data()[i] || label.data()[i]) continue;
    ++next;
    queue.clear();
    queue.push_back(i);
    label.data()[i] = next;
    Eigen::Index xmin = cols, xmax = -1, ymin = rows, ymax = -1;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const auto p = queue[h];
      const auto pr = p / cols;
      const auto pc = p % cols;
      xmin = std::min(xmin, pc);
      xmax = std::max(xmax, pc);
      ymin = std::min(ymin, pr);
      ymax = std::max(ymax, pr);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const auto nr = pr + dr;
          const auto nc = pc + dc;
          if (nr < 0 || nc < 0 || nr >= rows || nc >= cols) continue;
          const auto q = nr * cols + nc;
          if (mask.data()[q] && !label.data()[q]) {
            label.data()[q] = next;
            queue.push_back(q);
          }
        }
    }
    if (static_cast<Eigen::Index>(queue.size()) < min_area_px) continue;
    RegionMask region;
    region.mask = Mask::Zero(rows, cols);
    for (auto p : queue) region.mask.data()[p] = 1;
    region.area = static_cast<Eigen::Index>(queue.size());
    region.bbox = Eigen::AlignedBox2i(Eigen::Vector2i(static_cast<int>(xmin), static_cast<int>(ymin)),
                                      Eigen::Vector2i(static_cast<int>(xmax), static_cast<int>(ymax)));
    region.contour = trace_contour(region.mask, Eigen::Vector2i(static_cast<int>(i % cols), static_cast<int>(i / cols)));
    regions.push_back(std::move(region));
  }
  return regions;
}

}  // namespace lsd
