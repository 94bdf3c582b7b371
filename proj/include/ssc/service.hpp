#pragma once

#include <functional>
#include <memory>
#include <string>

#include "ssc/pipeline.hpp"

namespace ssc {

struct ServiceOptions {
  double bev_cell = 0.2;
  /// Called with the sequence id while a track write holds the writer slot,
  /// before the file is replaced. Lets tests hold the slot open.
  std::function<void(const std::string&)> before_commit;
};

/// HTTP annotation service over a manifest.
///
///   GET  /sequences                      [{"id", "frames"}]
///   GET  /sequences/{id}/frames          [{"index", "time_us", "pose": {x, y, yaw}}]
///   GET  /sequences/{id}/bev/{frame}     PNG; X-Bev-* headers give origin, cell, size
///   GET  /sequences/{id}/tracks          stored payload verbatim; ETag = revision
///   PUT  /sequences/{id}/tracks          replaces the payload; If-Match optional
///   POST /sequences/{id}/interpolate     {"keyframes": [...], "times_us"?: [...]}
///
/// PNG row 0 is the raster's top (largest y). A second concurrent PUT on the
/// same sequence gets 409; a stale If-Match gets 412.
class AnnotationService {
 public:
  AnnotationService(Manifest manifest, PipelineConfig config, ServiceOptions options = {});
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Binds without serving; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void serve();
  /// serve() on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Content revision used for ETag / If-Match (FNV-1a, hex).
std::string payload_revision(std::string_view payload);

}  // namespace ssc
