#include "bhflow/cli/app.hpp"

int main(int argc, char** argv) { return bhflow::cli::run(argc, argv); }
