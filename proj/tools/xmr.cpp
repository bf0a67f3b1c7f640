#include "cli_app.hpp"

int main(int argc, char **argv) { return xmr::cli::run(argc, argv); }
