#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "wbforge/annotation/crosscheck.hpp"
#include "wbforge/annotation/review.hpp"
#include "wbforge/annotation/store.hpp"

namespace httplib {
class Server;
}

namespace wbforge {

struct AnnotationServerOptions {
    std::optional<std::filesystem::path> ui_dir; // static bundle mounted at /
    CrossCheckConfig crosscheck;
};

// HTTP+JSON API:
//   GET  /api/samples                      review-set ids and camera ids
//   GET  /api/samples/{id}[?view=c]        projected skeleton per view
//   GET  /api/samples/{id}/image?view=c    the image, or an SVG render
//   POST /api/samples/{id}/corrections     store a CorrectionRecord
//   GET  /api/report                       cross-check report
//   GET  /api/layout                       keypoint layout
// Errors come back as {"error": reason} with 400 (malformed), 404 (unknown
// sample) or 422 (failed validation).
class AnnotationServer {
public:
    AnnotationServer(const ReviewSet& set, CorrectionStore& store, AnnotationServerOptions options = {});
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    // Port 0 picks a free port. Returns the bound port; throws Error on failure.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    const ReviewSet& set_;
    CorrectionStore& store_;
    AnnotationServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace wbforge
