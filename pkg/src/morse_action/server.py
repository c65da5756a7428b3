
import os
import logging
import json
import inspect
import importlib.util
import asyncio
import pprint
from itertools import chain
from typing import Sequence, List, Any, Callable, Dict, Optional

import mcp.server.stdio
from mcp.types import Tool, TextContent, ImageContent, EmbeddedResource
from mcp.server.fastmcp.utilities.func_metadata import func_metadata
from mcp.server.lowlevel import NotificationOptions, Server
from mcp.server.models import InitializationOptions
import pydantic_core

from . import __version__
from .config import LOG_FORMAT, log_level

SCRIPT_DIRECTORY = os.path.dirname(os.path.abspath(__file__))

TOOLS_DIRECTORY = os.path.join(SCRIPT_DIRECTORY, "actiontools")

logger = logging.getLogger("MorseAction.server")

_operation_manager = None


class OperationsManager():
    """ manages the tools found under actiontools """

    def __init__(self):
        self._paths = {}
        self._tools = {}
        self._functions = {}

    def has_tool(self, name:str) -> bool:
        return name in self._tools

    def get_tool(self, name:str) -> Optional[Tool]:
        return self._tools.get(name)

    def get_file_path(self, name:str) -> Optional[str]:
        return self._paths.get(name)

    def get_function(self, name:str) -> Optional[Callable[..., Dict[str, Any]]]:
        return self._functions.get(name)

    def get_tools(self) -> List[Tool]:
        return [self._tools[name] for name in sorted(self._tools)]

    def find_tools(self):
        """ find every tool module in the actiontools directory, one function per file named after it """
        for root, dirs, files in sorted(os.walk(TOOLS_DIRECTORY)):
            for file in sorted(files):
                if file.endswith(".py") and not file.startswith("__"):
                    name, _ = os.path.splitext(file)
                    path = os.path.join(root, file)
                    loaded = OperationsManager._get_function_tool(name, path)

                    if loaded:
                        self._paths[name] = path
                        self._tools[name], self._functions[name] = loaded

    @staticmethod
    def _get_function_tool(tool_name:str, filename:str):
        """ load a python file and read the function signature and docs into a MCP types.Tool """
        try:
            spec = importlib.util.spec_from_file_location(tool_name, filename)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            fn = getattr(module, tool_name)
        except Exception as e:
            logger.error(f"Unable to pre-load {tool_name} because: {e}")
            return None

        if inspect.iscoroutinefunction(fn):
            logger.error(f"Tool {tool_name} must be a plain function")
            return None

        parameters = func_metadata(fn).arg_model.model_json_schema()

        tool = Tool(
            name=tool_name,
            description=inspect.cleandoc(fn.__doc__ or ""),
            inputSchema=parameters
        )

        return tool, fn


def tools() -> OperationsManager:
    """ the process-wide operations manager, created on first use """
    global _operation_manager
    if _operation_manager is None:
        _operation_manager = OperationsManager()
        _operation_manager.find_tools()
    return _operation_manager


def convert_to_content(
    result: Any,
) -> Sequence[TextContent | ImageContent | EmbeddedResource]:
    """ Convert a result to a sequence of content objects. """
    if result is None:
        return []

    if isinstance(result, TextContent | ImageContent | EmbeddedResource):
        return [result]

    if isinstance(result, list | tuple):
        return list(chain.from_iterable(convert_to_content(item) for item in result))

    if not isinstance(result, str):
        try:
            result = json.dumps(pydantic_core.to_jsonable_python(result), sort_keys=True)
        except Exception:
            result = str(result)

    return [TextContent(type="text", text=result)]


server = Server("MorseActionMCP")

@server.list_tools()
async def handle_list_tools() -> list[Tool]:
    """ handle request from MCP client to get a list of tools """
    logger.info("Requesting a list of tools.")
    return tools().get_tools()


@server.call_tool()
async def handle_call_tool(
    name: str,
    arguments: dict | None
) -> list[TextContent | ImageContent | EmbeddedResource]:
    """ handle request from MCP client to call tool """

    logger.info(f"Calling tool {name} with arguments: {pprint.pformat(arguments)}")

    fn = tools().get_function(name)
    if fn is None:
        error_msg = f"Error: tool {name} not found."
        logger.error(error_msg)
        return convert_to_content({"success": False, "message": error_msg})

    try:
        results = await asyncio.to_thread(fn, **(arguments or {}))
    except Exception as e:
        logger.critical(e, exc_info=True)
        error_msg = f"Error: tool {name} failed to run. Reason {e}"
        logger.error(error_msg)
        return convert_to_content({"success": False, "message": error_msg})

    return convert_to_content(results)


async def run():
    async with mcp.server.stdio.stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            InitializationOptions(
                server_name="MorseActionMCP",
                server_version=__version__,
                capabilities=server.get_capabilities(
                    notification_options=NotificationOptions(),
                    experimental_capabilities={},
                ),
            ),
        )


def main():
    """Entry point for the morse-action-mcp console script"""
    logging.basicConfig(
        level=getattr(logging, log_level(), logging.DEBUG),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(SCRIPT_DIRECTORY, 'morse_action_mcp_server.log')),
        ]
    )

    tools()
    logger.info(f"MorseActionMCP v{__version__} server starting up")

    asyncio.run(run())


if __name__ == '__main__':
    main()
