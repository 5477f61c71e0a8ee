#include "core/common/errors.hpp"
#include "core/common/log.hpp"
#include "core/data/image.hpp"
#include "core/finetune/finetune.hpp"
#include "core/report/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>

namespace sslseg::report {
namespace {

void blit(data::Image& dst, const data::Image& src, int ox, int oy) {
  if (ox + src.width > dst.width || oy + src.height > dst.height) {
    throw ValidationError("export-masks: panels of different sizes cannot share an overview");
  }
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = src.at(y, x, src.channels == 1 ? 0 : c);
        dst.at(oy + y, ox + x, c) = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
      }
}

data::Image mask_tile(const data::Mask& m) {
  data::Image im(m.height, m.width, 3);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = m.at(y, x) ? 1.0 : 0.0;
  return im;
}

std::string file_stem(std::string_view id) {
  std::string s(id);
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return s;
}

}  // namespace

PanelExport export_mask_panels(models::SegmentationNetwork& model, const std::vector<const data::ImageSample*>& samples,
                               const std::filesystem::path& out_dir) {
  PanelExport out;
  std::vector<const data::ImageSample*> usable;
  for (const auto* s : samples) {
    if (!s->mask) {
      log::warn("export-masks: {} has no ground-truth mask, skipped", s->id);
      out.skipped.push_back(s->id);
    } else {
      usable.push_back(s);
    }
  }
  if (usable.empty()) return out;
  std::filesystem::create_directories(out_dir);

  std::vector<const data::Image*> images;
  for (const auto* s : usable) images.push_back(&s->pixels);
  const auto preds = finetune::predict(model, images);

  std::vector<data::Image> benign, malignant;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const auto& s = *usable[i];
    const int h = s.pixels.height, w = s.pixels.width;
    if (s.mask->height != h || s.mask->width != w) {
      throw ValidationError(fmt::format("export-masks: mask of {} does not match its image", s.id));
    }
    data::Image panel(h, 3 * w, 3);
    blit(panel, s.pixels, 0, 0);
    blit(panel, mask_tile(*s.mask), w, 0);
    blit(panel, mask_tile(preds[i]), 2 * w, 0);
    const auto path = out_dir / (file_stem(s.id) + "_panel.png");
    data::write_png(path, panel);
    out.panels.push_back(path);
    if (s.id.find("malignant") != std::string::npos) malignant.push_back(std::move(panel));
    else if (s.id.find("benign") != std::string::npos) benign.push_back(std::move(panel));
  }

  if (!benign.empty() || !malignant.empty()) {
    // Benign panels in the first column, malignant in the second.
    const auto& any = benign.empty() ? malignant.front() : benign.front();
    const int ph = any.height, pw = any.width, gap = 4;
    const int rows = static_cast<int>(std::max(benign.size(), malignant.size()));
    data::Image overview(rows * ph + (rows - 1) * gap, 2 * pw + gap, 3, 1.0);
    for (std::size_t r = 0; r < benign.size(); ++r) blit(overview, benign[r], 0, static_cast<int>(r) * (ph + gap));
    for (std::size_t r = 0; r < malignant.size(); ++r)
      blit(overview, malignant[r], pw + gap, static_cast<int>(r) * (ph + gap));
    out.overview = out_dir / "overview.png";
    data::write_png(*out.overview, overview);
  }
  return out;
}

}  // namespace sslseg::report
