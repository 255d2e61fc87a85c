#include <CLI11.hpp>
#include <iostream>

#include "gsculpt/server.h"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen.
#include <httplib.h>

int main(int argc, char** argv) {
  CLI::App app{"HTTP session service for interactive segmentation", "gsculpt_server"};
  std::string host = "127.0.0.1";
  int port = 8080;
  int job_workers = 2;
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port)->capture_default_str();
  app.add_option("--job-workers", job_workers, "background job threads")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  gsculpt::SessionService service(job_workers);
  httplib::Server server;
  gsculpt::RegisterRoutes(server, service);
  std::cerr << "listening on " << host << ':' << port << '\n';
  if (!server.listen(host, port)) {
    std::cerr << "cannot bind " << host << ':' << port << '\n';
    return 1;
  }
  return 0;
}
