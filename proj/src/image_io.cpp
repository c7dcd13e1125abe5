#include "cevae/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace cevae {

Tensor load_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorKind::Input, "cannot decode image: " + path);
  Tensor out({3, bgr.rows, bgr.cols});
  int64_t plane = static_cast<int64_t>(bgr.rows) * bgr.cols;
  for (int i = 0; i < bgr.rows; ++i) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(i);
    for (int j = 0; j < bgr.cols; ++j) {
      int64_t p = static_cast<int64_t>(i) * bgr.cols + j;
      out[p] = row[j][2] / 255.0;              // R
      out[plane + p] = row[j][1] / 255.0;      // G
      out[2 * plane + p] = row[j][0] / 255.0;  // B
    }
  }
  return out;
}

void save_image(const std::string& path, const Tensor& img_unit) {
  if (img_unit.rank() != 3 || img_unit.dim(0) != 3)
    throw Error(ErrorKind::Input, "save_image: expected (3,H,W)");
  int h = img_unit.dim(1), w = img_unit.dim(2);
  int64_t plane = static_cast<int64_t>(h) * w;
  cv::Mat bgr(h, w, CV_8UC3);
  for (int i = 0; i < h; ++i) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(i);
    for (int j = 0; j < w; ++j) {
      int64_t p = static_cast<int64_t>(i) * w + j;
      auto to8 = [](double v) {
        double c = std::clamp(v, 0.0, 1.0);
        return static_cast<unsigned char>(std::lround(c * 255.0));
      };
      row[j][2] = to8(img_unit[p]);
      row[j][1] = to8(img_unit[plane + p]);
      row[j][0] = to8(img_unit[2 * plane + p]);
    }
  }
  if (!cv::imwrite(path, bgr)) throw Error(ErrorKind::Input, "cannot write image: " + path);
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw Error(ErrorKind::Input, "resize_bilinear: expected (3,H,W)");
  int h = img.dim(1), w = img.dim(2);
  if (h == out_h && w == out_w) return img;
  int64_t plane = static_cast<int64_t>(h) * w;
  cv::Mat src(h, w, CV_64FC3);
  for (int i = 0; i < h; ++i) {
    cv::Vec3d* row = src.ptr<cv::Vec3d>(i);
    for (int j = 0; j < w; ++j) {
      int64_t p = static_cast<int64_t>(i) * w + j;
      row[j] = {img[p], img[plane + p], img[2 * plane + p]};
    }
  }
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  Tensor out({3, out_h, out_w});
  int64_t oplane = static_cast<int64_t>(out_h) * out_w;
  for (int i = 0; i < out_h; ++i) {
    const cv::Vec3d* row = dst.ptr<cv::Vec3d>(i);
    for (int j = 0; j < out_w; ++j) {
      int64_t p = static_cast<int64_t>(i) * out_w + j;
      out[p] = row[j][0];
      out[oplane + p] = row[j][1];
      out[2 * oplane + p] = row[j][2];
    }
  }
  return out;
}

}  // namespace cevae
