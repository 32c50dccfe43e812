var a=1;chrome.browserAction.setBadgeText({text:""+a});function b(){return a/2}var c=/x\/y/g;a++;
