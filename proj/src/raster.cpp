#include "dfd/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <png.h>

#include "json.hpp"

namespace dfd {

void Camera::validate() const {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw InputError("camera fov must be in (0, 180)");
  if (width < 1 || height < 1) throw InputError("camera resolution must be at least 1x1");
  if (!(near_plane > 0.0 && near_plane < far_plane)) throw InputError("camera needs 0 < near < far");
  if ((target - position).norm() <= 0.0) throw InputError("camera target equals position");
}

Camera::Frame Camera::frame() const {
  Frame f;
  f.forward = (target - position).normalized();
  Vec3d up_hint = up.normalized();
  if (std::abs(f.forward.dot(up_hint)) > 1.0 - 1e-9) {
    // View direction parallel to up: fall back to +Z (or +X if that is parallel too).
    up_hint = std::abs(f.forward.z()) < 0.9 ? Vec3d::UnitZ() : Vec3d::UnitX();
  }
  f.right = f.forward.cross(up_hint).normalized();
  f.up = f.right.cross(f.forward);
  return f;
}

Vec3d Camera::to_camera(const Vec3d& p) const {
  const auto f = frame();
  const Vec3d d = p - position;
  return {d.dot(f.right), d.dot(f.up), d.dot(f.forward)};
}

Eigen::Vector2d Camera::to_pixel(const Vec3d& cam) const {
  const double t = std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  const double aspect = static_cast<double>(width) / static_cast<double>(height);
  const double ndc_x = cam.x() / (cam.z() * t * aspect);
  const double ndc_y = cam.y() / (cam.z() * t);
  return {(ndc_x + 1.0) * 0.5 * width, (1.0 - ndc_y) * 0.5 * height};
}

Vec3d Camera::ray_direction(double px, double py) const {
  const auto f = frame();
  const double t = std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  const double aspect = static_cast<double>(width) / static_cast<double>(height);
  const double ndc_x = 2.0 * px / width - 1.0;
  const double ndc_y = 1.0 - 2.0 * py / height;
  return (f.forward + ndc_x * t * aspect * f.right + ndc_y * t * f.up).normalized();
}

std::vector<Camera> fibonacci_cameras(std::size_t n, const Mesh& mesh, const CameraRig& rig) {
  if (n < 1) throw InputError("need at least one camera");
  const auto sphere = bounding_sphere_of(mesh);
  if (!(sphere.radius > 0.f)) throw InputError("degenerate mesh: all vertices coincide");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const Vec3d center = sphere.center.cast<double>();
  const double dist = rig.radius_factor * sphere.radius;
  std::vector<Camera> cams;
  cams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * static_cast<double>(i);
    const Vec3d dir(r * std::cos(phi), y, r * std::sin(phi));
    Camera c;
    c.position = center + dist * dir;
    c.target = center;
    c.up = Vec3d::UnitY();
    c.fov_deg = rig.fov_deg;
    c.width = c.height = rig.resolution;
    c.near_plane = std::max(1e-6, 0.01 * sphere.radius);
    c.far_plane = dist + 2.0 * sphere.radius;
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

std::size_t RasterMap::coverage() const {
  return static_cast<std::size_t>(
      std::count_if(face.begin(), face.end(), [](std::uint32_t f) { return f != kNoFace; }));
}

namespace {

struct ClipVertex {
  Vec3d cam;   // camera-space position
  Vec3d bary;  // barycentric coordinates w.r.t. the original triangle
};

// Clips against z >= near, keeping original-triangle barycentrics.
int clip_near(const ClipVertex in[3], double near_plane, ClipVertex out[4]) {
  int count = 0;
  for (int k = 0; k < 3; ++k) {
    const auto& a = in[k];
    const auto& b = in[(k + 1) % 3];
    const bool a_in = a.cam.z() >= near_plane;
    const bool b_in = b.cam.z() >= near_plane;
    if (a_in) out[count++] = a;
    if (a_in != b_in) {
      const double t = (near_plane - a.cam.z()) / (b.cam.z() - a.cam.z());
      out[count++] = {a.cam + t * (b.cam - a.cam), a.bary + t * (b.bary - a.bary)};
    }
  }
  return count;
}

}  // namespace

RasterMap rasterize(const Mesh& mesh, const Camera& camera) {
  camera.validate();
  RasterMap map;
  map.width = camera.width;
  map.height = camera.height;
  const std::size_t npix = static_cast<std::size_t>(map.width) * map.height;
  map.face.assign(npix, kNoFace);
  map.bary.assign(npix, {0.f, 0.f, 0.f});
  map.depth.assign(npix, std::numeric_limits<float>::infinity());
  std::vector<double> zbuf(npix, std::numeric_limits<double>::infinity());

  const auto fr = camera.frame();
  const double t = std::tan(0.5 * camera.fov_deg * std::numbers::pi / 180.0);
  const double aspect = static_cast<double>(camera.width) / static_cast<double>(camera.height);
  const double W = camera.width, H = camera.height;

  std::vector<Vec3d> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) {
    const Vec3d d = mesh.vertices[i].cast<double>() - camera.position;
    cam[i] = {d.dot(fr.right), d.dot(fr.up), d.dot(fr.forward)};
  }

  for (std::uint32_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    ClipVertex tri[3] = {{cam[f[0]], Vec3d::UnitX()},
                         {cam[f[1]], Vec3d::UnitY()},
                         {cam[f[2]], Vec3d::UnitZ()}};
    if (tri[0].cam.z() < camera.near_plane && tri[1].cam.z() < camera.near_plane &&
        tri[2].cam.z() < camera.near_plane)
      continue;
    ClipVertex poly[4];
    int count;
    if (tri[0].cam.z() >= camera.near_plane && tri[1].cam.z() >= camera.near_plane &&
        tri[2].cam.z() >= camera.near_plane) {
      std::copy(tri, tri + 3, poly);
      count = 3;
    } else {
      count = clip_near(tri, camera.near_plane, poly);
    }

    double sx[4], sy[4], inv_z[4];
    for (int k = 0; k < count; ++k) {
      const auto& c = poly[k].cam;
      inv_z[k] = 1.0 / c.z();
      sx[k] = (c.x() * inv_z[k] / (t * aspect) + 1.0) * 0.5 * W;
      sy[k] = (1.0 - c.y() * inv_z[k] / t) * 0.5 * H;
    }

    for (int s = 1; s + 1 < count; ++s) {
      const int i0 = 0, i1 = s, i2 = s + 1;
      const double area = (sx[i1] - sx[i0]) * (sy[i2] - sy[i0]) - (sx[i2] - sx[i0]) * (sy[i1] - sy[i0]);
      if (area == 0.0 || !std::isfinite(area)) continue;
      const double inv_area = 1.0 / area;

      const double min_x = std::min({sx[i0], sx[i1], sx[i2]});
      const double max_x = std::max({sx[i0], sx[i1], sx[i2]});
      const double min_y = std::min({sy[i0], sy[i1], sy[i2]});
      const double max_y = std::max({sy[i0], sy[i1], sy[i2]});
      // Pixel x is sampled at x + 0.5.
      const long x0 = std::max(0L, static_cast<long>(std::ceil(min_x - 0.5)));
      const long x1 = std::min(static_cast<long>(W) - 1, static_cast<long>(std::floor(max_x - 0.5)));
      const long y0 = std::max(0L, static_cast<long>(std::ceil(min_y - 0.5)));
      const long y1 = std::min(static_cast<long>(H) - 1, static_cast<long>(std::floor(max_y - 0.5)));
      if (x0 > x1 || y0 > y1) continue;

      for (long y = y0; y <= y1; ++y) {
        const double py = static_cast<double>(y) + 0.5;
        for (long x = x0; x <= x1; ++x) {
          const double px = static_cast<double>(x) + 0.5;
          // Screen-space barycentrics via edge functions.
          const double l0 = ((sx[i1] - px) * (sy[i2] - py) - (sx[i2] - px) * (sy[i1] - py)) * inv_area;
          const double l1 = ((sx[i2] - px) * (sy[i0] - py) - (sx[i0] - px) * (sy[i2] - py)) * inv_area;
          const double l2 = 1.0 - l0 - l1;
          if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
          const double w0 = l0 * inv_z[i0], w1 = l1 * inv_z[i1], w2 = l2 * inv_z[i2];
          const double wsum = w0 + w1 + w2;
          const double depth = 1.0 / wsum;
          if (depth > camera.far_plane) continue;
          const std::size_t idx = static_cast<std::size_t>(y) * camera.width + static_cast<std::size_t>(x);
          if (!(depth < zbuf[idx] * (1.0 - 1e-9))) continue;
          zbuf[idx] = depth;
          const Vec3d b = (w0 * poly[i0].bary + w1 * poly[i1].bary + w2 * poly[i2].bary) / wsum;
          map.face[idx] = fi;
          map.bary[idx] = {static_cast<float>(b.x()), static_cast<float>(b.y()),
                           static_cast<float>(b.z())};
          map.depth[idx] = static_cast<float>(depth);
        }
      }
    }
  }
  return map;
}

std::vector<RenderSample> surface_points(const RasterMap& raster, const Mesh& mesh,
                                         std::uint32_t view) {
  std::vector<RenderSample> out;
  out.reserve(raster.coverage());
  for (std::uint32_t y = 0; y < raster.height; ++y)
    for (std::uint32_t x = 0; x < raster.width; ++x) {
      const auto idx = raster.index(x, y);
      const auto fi = raster.face[idx];
      if (fi == kNoFace) continue;
      if (fi >= mesh.faces.size()) throw InputError("raster does not belong to this mesh");
      const auto& f = mesh.faces[fi];
      const auto& b = raster.bary[idx];
      const Vec3d p = static_cast<double>(b[0]) * mesh.vertices[f[0]].cast<double>() +
                      static_cast<double>(b[1]) * mesh.vertices[f[1]].cast<double>() +
                      static_cast<double>(b[2]) * mesh.vertices[f[2]].cast<double>();
      out.push_back({p.cast<float>(), view, x, y, fi, b});
    }
  return out;
}

Image shade(const RasterMap& raster, const Mesh& mesh, const Camera& camera) {
  Image img;
  img.width = raster.width;
  img.height = raster.height;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 255);
  const auto fr = camera.frame();
  // Key, fill and rim lights in camera space.
  const Vec3d lights[3] = {(-fr.forward + fr.up + fr.right).normalized(),
                           (-fr.forward - 0.5 * fr.right).normalized(),
                           (fr.forward + fr.up).normalized()};
  const double intensity[3] = {0.65, 0.3, 0.2};
  for (std::size_t i = 0; i < raster.face.size(); ++i) {
    const auto fi = raster.face[i];
    if (fi == kNoFace) continue;
    const auto& f = mesh.faces[fi];
    Vec3d n = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                  .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]])
                  .cast<double>();
    if (n.norm() > 0) n.normalize();
    if (n.dot(fr.forward) > 0) n = -n;
    double light = 0.15;
    for (int k = 0; k < 3; ++k) light += intensity[k] * std::max(0.0, n.dot(lights[k]));
    Vec3d base(0.78, 0.78, 0.78);
    if (!mesh.colors.empty()) {
      base.setZero();
      for (auto v : f)
        for (int c = 0; c < 3; ++c) base[c] += mesh.colors[v][c] / (3.0 * 255.0);
    }
    for (int c = 0; c < 3; ++c)
      img.rgb[3 * i + c] = static_cast<std::uint8_t>(std::clamp(base[c] * light * 255.0, 0.0, 255.0));
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw InputError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw InputError("PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::uint32_t y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void save_camera_manifest(const std::filesystem::path& path, const std::vector<Camera>& cameras) {
  nlohmann::json views = nlohmann::json::array();
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    const auto& c = cameras[k];
    views.push_back({{"id", k},
                     {"image", "view_" + std::to_string(k) + ".png"},
                     {"position", {c.position.x(), c.position.y(), c.position.z()}},
                     {"target", {c.target.x(), c.target.y(), c.target.z()}},
                     {"up", {c.up.x(), c.up.y(), c.up.z()}},
                     {"fov", c.fov_deg},
                     {"resolution", {c.width, c.height}},
                     {"near", c.near_plane},
                     {"far", c.far_plane}});
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << nlohmann::json{{"views", views}}.dump(2) << '\n';
}

std::vector<Camera> load_camera_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<Camera> cams;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& v : doc.at("views")) {
      Camera c;
      auto vec = [&](const char* key) {
        const auto& a = v.at(key);
        return Vec3d(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
      };
      c.position = vec("position");
      c.target = vec("target");
      c.up = vec("up");
      c.fov_deg = v.at("fov").get<double>();
      c.width = v.at("resolution").at(0).get<std::uint32_t>();
      c.height = v.at("resolution").at(1).get<std::uint32_t>();
      c.near_plane = v.at("near").get<double>();
      c.far_plane = v.at("far").get<double>();
      c.validate();
      cams.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad camera manifest " + path.string() + ": " + e.what());
  }
  return cams;
}

RasterMap raster_from_samples(const std::vector<RenderSample>& samples, std::uint32_t view,
                              std::uint32_t width, std::uint32_t height) {
  RasterMap map;
  map.width = width;
  map.height = height;
  const std::size_t npix = static_cast<std::size_t>(width) * height;
  map.face.assign(npix, kNoFace);
  map.bary.assign(npix, {0.f, 0.f, 0.f});
  map.depth.assign(npix, 0.f);
  for (const auto& s : samples) {
    if (s.view != view) continue;
    if (s.x >= width || s.y >= height) throw InputError("sample pixel outside raster");
    const auto idx = map.index(s.x, s.y);
    map.face[idx] = s.face;
    map.bary[idx] = s.bary;
  }
  return map;
}

}  // namespace dfd
