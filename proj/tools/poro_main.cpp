#include "poro/cli.hpp"

int main(int argc, char** argv) { return poro::cli_main(argc, argv); }
